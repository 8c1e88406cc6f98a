import csv
import io
import json
import shutil
import subprocess

import pytest

from earcapauth.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(path):
    return list(csv.reader(io.StringIO(path.read_text())))


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "data"
    # 3 participants, full-length sessions so scoring sees 120 chunks
    assert main(["synth", "--participants", "3", "--duration", "60", "-o", str(d)]) == 0
    return d


def test_synth_writes_manifest_and_params(data_dir):
    m = json.loads((data_dir / "manifest.json").read_text())
    assert len(m["sessions"]) == 60 and m["provenance"] == "synthetic"
    g = json.loads((data_dir / "generator.json").read_text())
    assert g["n_participants"] == 3 and g["session_sigma"] == 52.0


def test_validate_clean(capsys, data_dir):
    code, out, _ = run(capsys, "validate", data_dir)
    assert code == 0 and "0 violations" in out


def test_validate_reports_bad_rows(capsys, tmp_path, data_dir):
    d = tmp_path / "d"
    shutil.copytree(data_dir, d)
    f = d / "P01" / "session01_left.csv"
    lines = f.read_text().splitlines()
    cells = lines[5].split(",")
    cells[3] = "-1.0"
    lines[5] = ",".join(cells)
    f.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "validate", d)
    assert code == 1 and "non-negative" in out


def test_eval_id_outputs(capsys, tmp_path, data_dir):
    code, out, _ = run(capsys, "eval-id", data_dir, "-o", tmp_path)
    assert code == 0 and "accuracy" in out
    rep = json.loads((tmp_path / "id_report.json").read_text())
    assert rep["protocol"] == "id" and len(rep["folds"]) == 12
    cm = rows(tmp_path / "id_confusion.csv")
    assert cm[0] == ["true", "P01", "P02", "P03"]
    assert sum(int(v) for r in cm[1:] for v in r[1:]) == 3 * 12 * 120
    assert (tmp_path / "id_confusion.png").stat().st_size > 0


def test_eval_auth_outputs(capsys, tmp_path, data_dir):
    code, out, _ = run(capsys, "eval-auth", data_dir, "-o", tmp_path, "--no-plots")
    assert code == 0 and "EER" in out
    sweep = rows(tmp_path / "auth_sweep.csv")
    assert sweep[0] == ["threshold", "far", "frr"]
    values = [[float(v) for v in r] for r in sweep[1:]]
    assert values[0][1:] == [1.0, 0.0] and values[-1][1:] == [0.0, 1.0]
    assert not (tmp_path / "auth_far_frr.png").exists()


def test_eval_motion_and_curve(capsys, tmp_path, data_dir):
    assert run(capsys, "eval-motion", data_dir, "--task", "auth", "-o", tmp_path, "--no-plots")[0] == 0
    assert json.loads((tmp_path / "motion_auth_report.json").read_text())["protocol"] == "motion-auth"
    code, _, _ = run(capsys, "enroll-curve", data_dir, "--max-sessions", "2", "--seconds-per-session", "5", "-o", tmp_path)
    assert code == 0
    curve = rows(tmp_path / "enroll_curve.csv")
    assert curve[0] == ["k", "mean", "std"] and [r[0] for r in curve[1:]] == ["1", "2"]
    assert (tmp_path / "enroll_curve.png").exists()


def test_train_and_score_auth(capsys, tmp_path, data_dir):
    model = tmp_path / "p01.json"
    code, out, _ = run(capsys, "train", data_dir, "--task", "auth", "--target", "P01", "--model", model)
    assert code == 0 and "P01" in out
    mf = json.loads(model.read_text())
    assert mf["kind"] == "auth" and 0.0 < mf["threshold"] < 1.0
    code, out, _ = run(
        capsys,
        "score",
        model,
        "--left",
        data_dir / "P01" / "session02_left.csv",
        "--right",
        data_dir / "P01" / "session02_right.csv",
        "-o",
        tmp_path,
    )
    assert code == 0 and out.startswith("score: accept")
    table = rows(tmp_path / "scores.csv")
    assert table[0] == ["chunk_index", "t_start_s", "score", "decision"]
    assert len(table) - 1 == 120
    starts = [float(r[1]) for r in table[1:]]
    assert starts[0] == 15.0
    assert starts[1] - starts[0] == pytest.approx(1 / 3)


def test_train_and_score_id(capsys, tmp_path, data_dir):
    model = tmp_path / "id.json"
    assert run(capsys, "train", data_dir, "--task", "id", "--model", model)[0] == 0
    code, out, _ = run(
        capsys,
        "score",
        model,
        "--left",
        data_dir / "P02" / "session03_left.csv",
        "--right",
        data_dir / "P02" / "session03_right.csv",
        "-o",
        tmp_path,
    )
    assert code == 0 and out.startswith("score: P02")
    assert rows(tmp_path / "scores.csv")[0] == ["chunk_index", "t_start_s", "predicted", "probability"]


def test_auth_on_single_participant_fails(capsys, tmp_path):
    d = tmp_path / "one"
    assert run(capsys, "synth", "--participants", "1", "--duration", "22", "-o", d)[0] == 0
    code, _, err = run(capsys, "eval-auth", d, "-o", tmp_path)
    assert code == 1 and err.startswith("error:") and "participants" in err


def test_train_auth_needs_target(capsys, data_dir, tmp_path):
    code, _, err = run(capsys, "train", data_dir, "--task", "auth", "-o", tmp_path)
    assert code == 1 and "--target" in err


def test_missing_dataset(capsys, tmp_path):
    code, _, err = run(capsys, "eval-id", tmp_path / "nowhere")
    assert code == 1 and "manifest not found" in err


def test_bad_flags_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval-id"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["eval-motion", "x", "--task", "both"])
    assert exc.value.code == 2


def test_invalid_pipeline_value(capsys, data_dir, tmp_path):
    code, _, err = run(capsys, "eval-id", data_dir, "--chunk-len", "0", "-o", tmp_path)
    assert code == 1 and "chunk_len" in err


def test_out_dir_from_environment(capsys, monkeypatch, tmp_path, data_dir):
    monkeypatch.setenv("EARCAPAUTH_OUT", str(tmp_path / "env"))
    assert run(capsys, "eval-motion", data_dir, "--no-plots")[0] == 0
    assert (tmp_path / "env" / "motion_id_report.json").exists()


def test_console_script(tmp_path):
    exe = shutil.which("earcapauth")
    if exe is None:
        pytest.skip("console script not installed")
    proc = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "earcapauth" in proc.stdout
    proc = subprocess.run([exe, "validate", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("error:")
