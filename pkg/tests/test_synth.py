import dataclasses
import json

import numpy as np
import pytest

from earcapauth.core import N_CHANNELS, Dataset, PipelineConfig, validate_dataset
from earcapauth.errors import InputError
from earcapauth.eval import id_protocol
from earcapauth.ingestion import chunk_dataset, load_dataset, parse_recording
from earcapauth.synth import (
    COUNT_MAX,
    GeneratorParams,
    calibrated_params,
    export_dataset,
    generate_dataset,
    participant_ids,
)

# frame-noise ladder for the difficulty regression; everything else fixed
FRAME_SIGMA_LADDER = (0.0, 4.0, 16.0, 32.0, 64.0, 128.0, 256.0)


def tiny(**kw):
    base = dict(n_participants=2, n_rest_sessions=2, n_walking_sessions=1, session_duration_s=2.0)
    return GeneratorParams(**{**base, **kw})


def test_zero_noise_is_baseline_everywhere():
    ds = generate_dataset(tiny(user_sigma=0, session_sigma=0, frame_sigma=0, motion_sigma_extra=0))
    for s in ds.sessions:
        assert (s.values == 500.0).all()


def test_same_seed_same_bits():
    a = generate_dataset(tiny(rng_seed=9))
    b = generate_dataset(tiny(rng_seed=9))
    assert a == b
    assert all(x.values.tobytes() == y.values.tobytes() for x, y in zip(a.sessions, b.sessions))
    assert generate_dataset(tiny(rng_seed=10)) != a


def test_streams_are_independent():
    # raising frame noise must not move the session offsets
    a = generate_dataset(tiny(frame_sigma=0.0, motion_sigma_extra=0.0))
    b = generate_dataset(tiny(frame_sigma=0.0, motion_sigma_extra=50.0))
    assert np.array_equal(a.sessions[0].values, b.sessions[0].values)
    assert not np.array_equal(a.sessions[2].values, b.sessions[2].values)


def test_shape_schedule_and_validity():
    ds = generate_dataset(GeneratorParams(n_participants=2, session_duration_s=4.0))
    assert ds.participants == ["P01", "P02"]
    assert len(ds.sessions) == 40
    s = ds.session("P02", 7)
    assert s.activity == "walking" and s.values.shape == (60, N_CHANNELS)
    assert [x.activity.value for x in ds.sessions[:20]].count("walking") == 8
    assert validate_dataset(ds) == []
    assert ds.provenance == "synthetic"


def test_default_params_separate_users():
    ds = generate_dataset(GeneratorParams())
    x = chunk_dataset(ds, PipelineConfig()).features
    users = np.repeat(np.arange(20), len(x) // 20)
    means = np.stack([x[users == u].mean(axis=0) for u in range(20)])
    within = np.mean([x[users == u].var(axis=0) for u in range(20)], axis=0)
    between = means.var(axis=0)
    assert (between / within > 1.0).all()


def test_values_are_clamped():
    ds = generate_dataset(tiny(baseline=1000.0, user_sigma=200.0, frame_sigma=100.0))
    lo = min(s.values.min() for s in ds.sessions)
    hi = max(s.values.max() for s in ds.sessions)
    assert lo >= 0.0 and hi == COUNT_MAX


def test_invalid_params():
    with pytest.raises(InputError):
        GeneratorParams(frame_sigma=-1.0)
    with pytest.raises(InputError):
        GeneratorParams(n_participants=0)
    with pytest.raises(InputError):
        GeneratorParams(session_duration_s=0.0)
    with pytest.raises(InputError):
        GeneratorParams.from_dict({"bogus": 1})


def test_params_round_trip():
    p = tiny(rng_seed=3)
    assert GeneratorParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_calibrated_params_load():
    p = calibrated_params()
    assert (p.n_participants, p.n_rest_sessions, p.n_walking_sessions) == (20, 12, 8)
    assert calibrated_params(n_participants=3).n_participants == 3


def test_participant_ids_pad():
    assert participant_ids(3) == ["P01", "P02", "P03"]
    assert participant_ids(100)[0] == "P001"


def test_export_file_count_and_round_trip(tmp_path):
    ds = generate_dataset(tiny())
    manifest = export_dataset(ds, tmp_path, tiny())
    assert len(list(tmp_path.rglob("*.csv"))) == 2 * 3 * 2
    assert json.loads((tmp_path / "generator.json").read_text())["format"] == "earcapauth-generator"
    assert load_dataset(manifest) == ds
    for e in json.loads(manifest.read_text())["sessions"]:
        s = parse_recording(
            (tmp_path / e["left_path"]).read_text(),
            (tmp_path / e["right_path"]).read_text(),
            e["participant_id"],
            e["session_index"],
            e["activity"],
        )
        assert s == ds.session(e["participant_id"], e["session_index"])


def test_export_then_chunk_matches_direct(tmp_path, small_dataset, config):
    export_dataset(small_dataset, tmp_path)
    a = chunk_dataset(small_dataset, config)
    b = chunk_dataset(load_dataset(tmp_path), config)
    assert a.features.tobytes() == b.features.tobytes()


def test_exported_values_in_device_range(tmp_path):
    export_dataset(generate_dataset(tiny(baseline=20.0, user_sigma=50.0)), tmp_path)
    for f in tmp_path.rglob("*.csv"):
        vals = np.loadtxt(f, delimiter=",", skiprows=1)[:, 1:]
        assert vals.min() >= 0 and vals.max() <= 1023


def test_empty_dataset_export(tmp_path):
    manifest = export_dataset(Dataset(()), tmp_path)
    assert json.loads(manifest.read_text())["sessions"] == []
    assert list(tmp_path.rglob("*.csv")) == []


def test_export_reports_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(InputError, match="file"):
        export_dataset(generate_dataset(tiny()), blocker / "sub")


def test_frame_noise_ladder_never_helps_much():
    base = GeneratorParams(
        n_participants=6, n_rest_sessions=12, n_walking_sessions=0, session_duration_s=26.0, session_sigma=50.0, rng_seed=6
    )
    acc = [
        id_protocol(generate_dataset(dataclasses.replace(base, frame_sigma=fs)), PipelineConfig()).pooled[
            "accuracy_pooled"
        ]
        for fs in FRAME_SIGMA_LADDER
    ]
    for lo, hi in zip(acc, acc[1:]):
        assert hi - lo <= 0.02
    assert acc[-1] < acc[0]
