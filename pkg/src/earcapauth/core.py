"""Shared data model: frames, sessions, chunks, datasets and pipeline config."""

from __future__ import annotations

import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

N_CHANNELS = 48
CHANNELS_PER_EAR = 24
CHANNEL_NAMES = tuple(f"L{i}" for i in range(1, 25)) + tuple(f"R{i}" for i in range(1, 25))

# 12 Rest + 8 Walking sessions, 1-based index
STUDY_SESSIONS = 20
STUDY_WALKING = frozenset(range(7, 11)) | frozenset(range(17, 21))


class Activity(str, enum.Enum):
    REST = "rest"
    WALKING = "walking"

    @classmethod
    def parse(cls, value: str | Activity) -> Activity:
        if isinstance(value, Activity):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown activity {value!r} (expected 'rest' or 'walking')") from None


def study_activity(session_index: int) -> Activity:
    return Activity.WALKING if session_index in STUDY_WALKING else Activity.REST


def session_schedule(n_rest: int, n_walking: int) -> list[Activity]:
    """Activity per session (1-based order) for a recording schedule.

    The 12/8 case reproduces the study schedule (two blocks of six rest
    sessions each followed by four walking sessions). Other sizes put all
    rest sessions first.
    """
    if (n_rest, n_walking) == (12, 8):
        return [study_activity(i) for i in range(1, STUDY_SESSIONS + 1)]
    return [Activity.REST] * n_rest + [Activity.WALKING] * n_walking


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ElectrodeFrame:
    timestamp_s: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def left(self) -> np.ndarray:
        return self.values[:CHANNELS_PER_EAR]

    @property
    def right(self) -> np.ndarray:
        return self.values[CHANNELS_PER_EAR:]


@dataclass(frozen=True, eq=False)
class WearingSession:
    """One insertion-to-removal recording.

    ``values`` is an ``(n_frames, n_channels)`` array, channels ordered
    L1..L24 then R1..R24. Construction does not validate; see
    :func:`validate_dataset`.
    """

    participant_id: str
    session_index: int
    activity: Activity
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "participant_id", str(self.participant_id))
        object.__setattr__(self, "session_index", int(self.session_index))
        object.__setattr__(self, "activity", Activity.parse(self.activity))
        ts = _frozen(self.timestamps).reshape(-1)
        vals = _frozen(self.values)
        if vals.ndim == 1:
            vals = vals.reshape(len(ts), -1) if len(ts) else vals.reshape(0, N_CHANNELS)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_frames(cls, participant_id, session_index, activity, frames: Sequence[ElectrodeFrame]):
        widths = {len(f.values) for f in frames}
        if len(widths) > 1:
            raise ValueError(f"frames have inconsistent channel counts {sorted(widths)}")
        width = widths.pop() if widths else N_CHANNELS
        values = np.array([f.values for f in frames], dtype=np.float64).reshape(len(frames), width)
        return cls(participant_id, session_index, activity, [f.timestamp_s for f in frames], values)

    @property
    def key(self) -> tuple[str, int]:
        return (self.participant_id, self.session_index)

    @property
    def n_frames(self) -> int:
        return len(self.timestamps)

    @property
    def duration_s(self) -> float:
        if self.n_frames == 0:
            return 0.0
        return float(self.timestamps[-1] - self.timestamps[0])

    def frames(self) -> Iterator[ElectrodeFrame]:
        for t, v in zip(self.timestamps, self.values):
            yield ElectrodeFrame(float(t), v)

    def replace_frames(self, timestamps, values) -> WearingSession:
        return WearingSession(self.participant_id, self.session_index, self.activity, timestamps, values)

    def __eq__(self, other):
        if not isinstance(other, WearingSession):
            return NotImplemented
        return (
            self.key == other.key
            and self.activity == other.activity
            and np.array_equal(self.timestamps, other.timestamps)
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Chunk:
    participant_id: str
    session_index: int
    chunk_index: int
    features: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(self.features))

    def __eq__(self, other):
        if not isinstance(other, Chunk):
            return NotImplemented
        return (
            (self.participant_id, self.session_index, self.chunk_index)
            == (other.participant_id, other.session_index, other.chunk_index)
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    sessions: tuple[WearingSession, ...]
    sample_rate_hz: float = 15.0
    provenance: str = "recorded"

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))
        if self.provenance not in ("recorded", "synthetic"):
            raise ValueError(f"provenance must be 'recorded' or 'synthetic', got {self.provenance!r}")

    @property
    def participants(self) -> list[str]:
        return sorted({s.participant_id for s in self.sessions})

    def by_participant(self) -> dict[str, list[WearingSession]]:
        out: dict[str, list[WearingSession]] = defaultdict(list)
        for s in self.sessions:
            out[s.participant_id].append(s)
        return {p: sorted(out[p], key=lambda s: s.session_index) for p in sorted(out)}

    def session(self, participant_id: str, session_index: int) -> WearingSession:
        for s in self.sessions:
            if s.key == (participant_id, session_index):
                return s
        raise KeyError((participant_id, session_index))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.provenance == other.provenance
            and sorted(self.sessions, key=lambda s: s.key) == sorted(other.sessions, key=lambda s: s.key)
        )

    __hash__ = None


@dataclass(frozen=True)
class PipelineConfig:
    chunk_len_frames: int = 5
    head_trim_s: float = 15.0
    tail_trim_s: float = 5.0
    svm_c: float = 0.025
    sample_rate_hz: float = 15.0
    rng_seed: int = 0
    standardize: bool = True
    svm_tol: float = 1e-4
    svm_max_iter: int = 1000
    class_weight: bool = False
    platt_inner_folds: int = 0
    auth_folds: int = 3

    def __post_init__(self):
        if int(self.chunk_len_frames) < 1:
            raise ValueError("chunk_len_frames must be >= 1")
        if not self.svm_c > 0:
            raise ValueError("svm_c must be > 0")
        if self.head_trim_s < 0 or self.tail_trim_s < 0:
            raise ValueError("trims must be >= 0")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be > 0")
        if int(self.rng_seed) < 0:
            raise ValueError("rng_seed must be unsigned")
        if self.auth_folds < 2:
            raise ValueError("auth_folds must be >= 2")
        if self.platt_inner_folds < 0 or self.platt_inner_folds == 1:
            raise ValueError("platt_inner_folds must be 0 (off) or >= 2")


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    participant_id: str | None = None
    session_index: int | None = None
    frame_index: int | None = None
    severity: str = "error"

    def location(self) -> str:
        parts = []
        if self.participant_id is not None:
            parts.append(f"participant={self.participant_id}")
        if self.session_index is not None:
            parts.append(f"session={self.session_index}")
        if self.frame_index is not None:
            parts.append(f"frame={self.frame_index}")
        return " ".join(parts) or "dataset"

    def __str__(self):
        return f"[{self.severity}] {self.rule}: {self.message} ({self.location()})"


def _session_violations(s: WearingSession) -> list[Violation]:
    out = []
    loc = dict(participant_id=s.participant_id, session_index=s.session_index)
    v = s.values
    if v.ndim != 2 or v.shape[1] != N_CHANNELS:
        width = v.shape[1] if v.ndim == 2 else None
        out.append(Violation("channel-count", f"frames have {width} values, expected {N_CHANNELS}", **loc))
    if len(v) != len(s.timestamps):
        out.append(Violation("frame-count", f"{len(v)} value rows for {len(s.timestamps)} timestamps", **loc))
        return out
    bad = ~np.isfinite(v).all(axis=1) if v.ndim == 2 else np.zeros(len(v), bool)
    for i in np.flatnonzero(bad):
        out.append(Violation("finite", "non-finite channel value", frame_index=int(i), **loc))
    neg = (v < 0).any(axis=1) if v.ndim == 2 else np.zeros(len(v), bool)
    for i in np.flatnonzero(neg & ~bad):
        out.append(Violation("non-negative", "negative channel value", frame_index=int(i), **loc))
    ts = s.timestamps
    for i in np.flatnonzero(~np.isfinite(ts)):
        out.append(Violation("finite", "non-finite timestamp", frame_index=int(i), **loc))
    for i in np.flatnonzero(np.diff(ts) < 0):
        out.append(Violation("timestamp-order", "timestamp decreases", frame_index=int(i) + 1, **loc))
    if s.session_index < 1:
        out.append(Violation("session-index", "session index must be >= 1", **loc))
    return out


def validate_dataset(dataset: Dataset) -> list[Violation]:
    """Every invariant violation in ``dataset``, located; empty when valid.

    Departures from the 20-session study schedule are reported with
    severity ``"warning"``.
    """
    out: list[Violation] = []
    if not math.isfinite(dataset.sample_rate_hz) or dataset.sample_rate_hz <= 0:
        out.append(Violation("sample-rate", f"sample rate {dataset.sample_rate_hz} must be > 0"))

    counts = Counter(s.key for s in dataset.sessions)
    for (p, idx), n in sorted(counts.items()):
        if n > 1:
            out.append(Violation("unique-session", f"session appears {n} times", p, idx))

    for s in sorted(dataset.sessions, key=lambda s: s.key):
        out.extend(_session_violations(s))

    lengths = {p: len({s.session_index for s in ss}) for p, ss in dataset.by_participant().items()}
    if len(set(lengths.values())) > 1:
        expected = Counter(lengths.values()).most_common(1)[0][0]
        for p, n in lengths.items():
            if n != expected:
                out.append(Violation("ragged-schedule", f"{n} sessions, other participants have {expected}", p))

    for p, ss in dataset.by_participant().items():
        if {s.session_index for s in ss} != set(range(1, STUDY_SESSIONS + 1)):
            continue
        for s in ss:
            if s.activity != study_activity(s.session_index):
                out.append(
                    Violation(
                        "study-schedule",
                        f"activity {s.activity.value}, schedule expects {study_activity(s.session_index).value}",
                        p,
                        s.session_index,
                        severity="warning",
                    )
                )
    return out


def errors_only(violations: Sequence[Violation]) -> list[Violation]:
    return [v for v in violations if v.severity == "error"]
