import numpy as np

from earcapauth.eval import id_protocol, sweep_thresholds
from earcapauth.report import confusion_csv, curve_csv, sweep_csv, write_report


def test_sweep_csv_round_trips_floats():
    sw = sweep_thresholds([0.1, 0.7], [0.3])
    lines = sweep_csv(sw).splitlines()
    assert lines[0] == "threshold,far,frr"
    parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert parsed[:, 0].tobytes() == sw.thresholds.tobytes()


def test_confusion_and_curve_csv():
    assert confusion_csv(np.array([[2, 1], [0, 3]]), ["A", "B"]) == "true,A,B\nA,2,1\nB,0,3\n"
    assert curve_csv([(1, 0.5, 0.25)]) == "k,mean,std\n1,0.5,0.25\n"


def test_report_files_are_reproducible(tmp_path, small_dataset, config):
    rep = id_protocol(small_dataset, config)
    a = write_report(rep, tmp_path / "a", "id")
    b = write_report(rep, tmp_path / "b", "id")
    assert set(a) == {"report", "confusion", "confusion_plot"}
    for role in a:
        assert a[role].read_bytes() == b[role].read_bytes()
    assert a["confusion_plot"].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
