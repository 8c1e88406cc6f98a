"""Seeded synthetic capacitive datasets.

Each participant gets a 48-channel signature; each session adds a constant
placement offset; each frame adds independent Gaussian noise, with extra
noise while walking. Counts are clamped to the 10-bit device range.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import N_CHANNELS, Activity, Dataset, WearingSession, session_schedule
from .errors import InputError
from .fileio import write_json_atomic
from .ingestion import write_dataset

COUNT_MAX = 1023.0
PARAMS_FORMAT = "earcapauth-generator"
CALIBRATED_RESOURCE = "calibrated_generator.json"


@dataclass(frozen=True)
class GeneratorParams:
    n_participants: int = 20
    n_rest_sessions: int = 12
    n_walking_sessions: int = 8
    session_duration_s: float = 60.0
    sample_rate_hz: float = 15.0
    baseline: float = 500.0
    user_sigma: float = 40.0
    session_sigma: float = 8.0
    frame_sigma: float = 4.0
    motion_sigma_extra: float = 6.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_participants < 1:
            raise InputError("n_participants must be >= 1")
        if self.n_rest_sessions < 0 or self.n_walking_sessions < 0:
            raise InputError("session counts must be >= 0")
        if not self.session_duration_s > 0 or not self.sample_rate_hz > 0:
            raise InputError("session_duration_s and sample_rate_hz must be > 0")
        for name in ("user_sigma", "session_sigma", "frame_sigma", "motion_sigma_extra"):
            if not getattr(self, name) >= 0:
                raise InputError(f"{name} must be >= 0")
        if self.rng_seed < 0:
            raise InputError("rng_seed must be unsigned")

    def to_dict(self) -> dict:
        return {"format": PARAMS_FORMAT, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorParams:
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - fields - {"format", "comment"}
        if unknown:
            raise InputError(f"unknown generator parameters: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in fields})


def calibrated_params(**overrides) -> GeneratorParams:
    """The committed calibrated generator settings, optionally overridden."""
    text = resources.files("earcapauth").joinpath("data", CALIBRATED_RESOURCE).read_text(encoding="utf-8")
    params = GeneratorParams.from_dict(json.loads(text))
    return dataclasses.replace(params, **overrides) if overrides else params


def participant_ids(n: int) -> list[str]:
    width = max(2, len(str(n)))
    return [f"P{i:0{width}d}" for i in range(1, n + 1)]


def generate_dataset(params: GeneratorParams) -> Dataset:
    """Deterministic for a given ``params``.

    Signatures, session offsets, frame noise and motion noise come from
    separate seeded streams, so changing one sigma leaves the other draws
    untouched.
    """
    sig_rng, ses_rng, frame_rng, motion_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(params.rng_seed).spawn(4)
    )
    schedule = session_schedule(params.n_rest_sessions, params.n_walking_sessions)
    n_frames = int(round(params.session_duration_s * params.sample_rate_hz))
    timestamps = np.arange(n_frames) / params.sample_rate_hz
    pids = participant_ids(params.n_participants)

    signatures = params.baseline + params.user_sigma * sig_rng.standard_normal((len(pids), N_CHANNELS))
    offsets = params.session_sigma * ses_rng.standard_normal((len(pids), len(schedule), N_CHANNELS))
    sessions = []
    for p, pid in enumerate(pids):
        for s, activity in enumerate(schedule):
            noise = params.frame_sigma * frame_rng.standard_normal((n_frames, N_CHANNELS))
            motion = motion_rng.standard_normal((n_frames, N_CHANNELS))
            if activity == Activity.WALKING:
                noise = noise + params.motion_sigma_extra * motion
            values = np.clip(signatures[p] + offsets[p, s] + noise, 0.0, COUNT_MAX)
            sessions.append(WearingSession(pid, s + 1, activity, timestamps, values))
    return Dataset(tuple(sessions), params.sample_rate_hz, "synthetic")


def export_dataset(dataset: Dataset, directory: str | Path, params: GeneratorParams | None = None) -> Path:
    """Write the dataset in the recording/manifest format; returns the manifest path.

    ``params`` (when given) is stored as ``generator.json`` next to the manifest.
    """
    directory = Path(directory)
    try:
        manifest = write_dataset(dataset, directory)
        if params is not None:
            write_json_atomic(directory / "generator.json", params.to_dict())
    except OSError as e:
        raise InputError(f"{e.filename or directory}: {e.strerror}") from None
    return manifest
