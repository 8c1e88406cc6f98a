"""Recording CSV parsing, ear-stream alignment, trimming, chunking and scaling.

Recording CSV (one file per ear per session)::

    timestamp_s,c1,c2,...,c24
    0.0,512.25,498.0,...,501.5
    0.06666666666666667,...

UTF-8, comma separated, decimal-point reals, LF or CRLF line endings. The
writer emits LF and Python's shortest round-trip float repr, so a parse of
a written file reproduces the values bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    CHANNELS_PER_EAR,
    Activity,
    Chunk,
    Dataset,
    PipelineConfig,
    WearingSession,
)
from .errors import (
    AlignmentError,
    EmptySessionError,
    FormatVersionError,
    InputError,
    InsufficientDataError,
    ParseError,
)
from .fileio import dumps_json, write_text_atomic

log = logging.getLogger(__name__)

RECORDING_HEADER = ["timestamp_s"] + [f"c{i}" for i in range(1, CHANNELS_PER_EAR + 1)]
MANIFEST_FORMAT = "earcapauth-manifest"
MANIFEST_VERSION = 1
MAX_LENGTH_MISMATCH = 0.10
TRIM_EPS_S = 1e-9
STD_FLOOR = 1e-9


def read_recording(text: str, source: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Parse one ear's CSV text into ``(timestamps, values[n, 24])``."""
    if text.startswith("﻿"):
        text = text[1:]
    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows:
        raise ParseError("empty file", source, 1)
    header = [h.strip() for h in rows[0]]
    if header != RECORDING_HEADER:
        raise ParseError(
            f"bad header {','.join(header)!r}, expected {','.join(RECORDING_HEADER)!r}", source, 1
        )
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(RECORDING_HEADER):
            raise ParseError(f"expected {len(RECORDING_HEADER)} columns, got {len(row)}", source, lineno)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise ParseError(f"non-numeric cell {bad!r}", source, lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite cell", source, lineno)
        data.append(vals)
    if not data:
        raise ParseError("no data rows", source, len(rows))
    arr = np.array(data, dtype=np.float64)
    order = np.argsort(arr[:, 0], kind="stable")
    arr = arr[order]
    return arr[:, 0].copy(), arr[:, 1:].copy()


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def format_recording(timestamps, values) -> str:
    values = np.asarray(values, dtype=np.float64)
    lines = [",".join(RECORDING_HEADER)]
    for t, row in zip(np.asarray(timestamps, dtype=np.float64), values):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def pair_streams(left_t: np.ndarray, right_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(li, ri)`` matching each left row to its nearest right row.

    Both streams are shifted so their first rows coincide. A left row is kept
    only if its nearest right row lies within half the typical sample period
    and was not already claimed, which drops the unmatched tail of the longer
    stream.
    """
    rel_l = left_t - left_t[0]
    rel_r = right_t - right_t[0]
    periods = [np.median(np.diff(t)) for t in (rel_l, rel_r) if len(t) > 1]
    periods = [p for p in periods if p > 0]
    tol = 0.5 * min(periods) if periods else math.inf

    j = np.searchsorted(rel_r, rel_l)
    lo = np.clip(j - 1, 0, len(rel_r) - 1)
    hi = np.clip(j, 0, len(rel_r) - 1)
    pick_hi = np.abs(rel_r[hi] - rel_l) < np.abs(rel_r[lo] - rel_l)
    nearest = np.where(pick_hi, hi, lo)
    ok = np.abs(rel_r[nearest] - rel_l) <= tol + 1e-12

    li, ri, claimed = [], [], set()
    for i in np.flatnonzero(ok):
        r = int(nearest[i])
        if r in claimed:
            continue
        claimed.add(r)
        li.append(int(i))
        ri.append(r)
    return np.array(li, dtype=np.intp), np.array(ri, dtype=np.intp)


def parse_recording(
    left_text: str,
    right_text: str,
    participant_id: str,
    session_index: int,
    activity: Activity | str,
    left_source: str | None = None,
    right_source: str | None = None,
) -> WearingSession:
    """Merge one session's left and right ear files into 48-channel frames."""
    lt, lv = read_recording(left_text, left_source or "left")
    rt, rv = read_recording(right_text, right_source or "right")
    n_l, n_r = len(lt), len(rt)
    if abs(n_l - n_r) > MAX_LENGTH_MISMATCH * max(n_l, n_r):
        raise AlignmentError(
            f"participant {participant_id} session {session_index}: left has {n_l} rows, "
            f"right has {n_r} (more than {MAX_LENGTH_MISMATCH:.0%} apart)"
        )
    li, ri = pair_streams(lt, rt)
    if len(li) == 0:
        raise AlignmentError(f"participant {participant_id} session {session_index}: no rows could be paired")
    values = np.hstack([lv[li], rv[ri]])
    return WearingSession(participant_id, session_index, activity, lt[li], values)


def trim_session(session: WearingSession, head_trim_s: float, tail_trim_s: float) -> WearingSession:
    """Keep frames with ``t0 + head <= t <= t_end - tail``."""
    if head_trim_s < 0 or tail_trim_s < 0:
        raise InputError("trims must be >= 0")
    if head_trim_s == 0 and tail_trim_s == 0:
        return session
    ts = session.timestamps
    where = f"participant {session.participant_id} session {session.session_index}"
    if session.n_frames == 0 or session.duration_s <= head_trim_s + tail_trim_s:
        raise EmptySessionError(
            f"{where}: duration {session.duration_s:.3f} s does not exceed trims "
            f"{head_trim_s:g} + {tail_trim_s:g} s"
        )
    keep = (ts >= ts[0] + head_trim_s - TRIM_EPS_S) & (ts <= ts[-1] - tail_trim_s + TRIM_EPS_S)
    if not keep.any():
        raise EmptySessionError(f"{where}: no frames left after trimming")
    return session.replace_frames(ts[keep], session.values[keep])


def truncate_session(session: WearingSession, seconds: float) -> WearingSession:
    """First ``seconds`` of a session (frames with ``t < t0 + seconds``)."""
    ts = session.timestamps
    if session.n_frames == 0:
        return session
    keep = ts < ts[0] + seconds - TRIM_EPS_S
    return session.replace_frames(ts[keep], session.values[keep])


def chunk_means(values: np.ndarray, chunk_len_frames: int) -> np.ndarray:
    """Non-overlapping per-channel window means; the incomplete tail is dropped."""
    if chunk_len_frames < 1:
        raise InputError("chunk_len_frames must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    n = len(values) // chunk_len_frames
    windows = values[: n * chunk_len_frames].reshape(n, chunk_len_frames, values.shape[1])
    # clip removes last-ulp rounding so each mean stays inside its window's range
    return np.clip(windows.mean(axis=1), windows.min(axis=1), windows.max(axis=1))


def chunk_session(session: WearingSession, chunk_len_frames: int) -> list[Chunk]:
    means = chunk_means(session.values, chunk_len_frames)
    return [Chunk(session.participant_id, session.session_index, i, m) for i, m in enumerate(means)]


def prepare_session(session: WearingSession, config: PipelineConfig, seconds: float | None = None) -> np.ndarray:
    """Trim, optionally truncate, and chunk one session; returns chunk features."""
    s = trim_session(session, config.head_trim_s, config.tail_trim_s)
    if seconds is not None:
        s = truncate_session(s, seconds)
    return chunk_means(s.values, config.chunk_len_frames)


@dataclass(frozen=True, eq=False)
class ChunkTable:
    """All chunks of a dataset in columnar form, ordered by participant, session, chunk."""

    features: np.ndarray
    participant_ids: np.ndarray
    session_indices: np.ndarray
    chunk_indices: np.ndarray
    activities: np.ndarray

    def __len__(self):
        return len(self.features)

    def select(self, mask) -> ChunkTable:
        return ChunkTable(
            self.features[mask],
            self.participant_ids[mask],
            self.session_indices[mask],
            self.chunk_indices[mask],
            self.activities[mask],
        )

    def chunks(self) -> list[Chunk]:
        return [
            Chunk(str(p), int(s), int(c), f)
            for p, s, c, f in zip(self.participant_ids, self.session_indices, self.chunk_indices, self.features)
        ]


def chunk_dataset(dataset: Dataset, config: PipelineConfig, seconds: float | None = None) -> ChunkTable:
    feats, pids, sidx, cidx, acts = [], [], [], [], []
    for pid, sessions in dataset.by_participant().items():
        for s in sessions:
            m = prepare_session(s, config, seconds)
            feats.append(m)
            pids.extend([pid] * len(m))
            sidx.extend([s.session_index] * len(m))
            cidx.extend(range(len(m)))
            acts.extend([s.activity.value] * len(m))
    width = feats[0].shape[1] if feats else 0
    return ChunkTable(
        np.vstack(feats) if feats else np.zeros((0, width)),
        np.array(pids, dtype=object),
        np.array(sidx, dtype=np.int64),
        np.array(cidx, dtype=np.int64),
        np.array(acts, dtype=object),
    )


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    stddev: np.ndarray
    degenerate: np.ndarray

    def __post_init__(self):
        for name in ("mean", "stddev"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        d = np.array(self.degenerate, dtype=bool)
        d.flags.writeable = False
        object.__setattr__(self, "degenerate", d)

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "stddev": [float(v) for v in self.stddev],
            "degenerate": [bool(v) for v in self.degenerate],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(d["mean"], d["stddev"], d["degenerate"])

    def __eq__(self, other):
        if not isinstance(other, Standardizer):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("mean", "stddev", "degenerate"))

    __hash__ = None


def _as_matrix(chunks) -> np.ndarray:
    if isinstance(chunks, np.ndarray):
        return np.atleast_2d(np.asarray(chunks, dtype=np.float64))
    return np.array([c.features if isinstance(c, Chunk) else c for c in chunks], dtype=np.float64)


def fit_standardizer(chunks: Sequence[Chunk] | np.ndarray) -> Standardizer:
    """Per-channel mean and population stddev; zero-variance channels are flagged
    and their stddev clamped to ``STD_FLOOR``."""
    x = _as_matrix(chunks)
    if len(x) < 2:
        raise InsufficientDataError(f"need at least 2 chunks to fit a standardizer, got {len(x)}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    degenerate = std < STD_FLOOR
    if degenerate.any():
        log.warning("standardizer: %d degenerate channel(s) clamped", int(degenerate.sum()))
    return Standardizer(mean, np.where(degenerate, STD_FLOOR, std), degenerate)


def apply_standardizer(std: Standardizer, chunk) -> np.ndarray:
    x = chunk.features if isinstance(chunk, Chunk) else np.asarray(chunk, dtype=np.float64)
    return (x - std.mean) / std.stddev


# -- dataset manifest -------------------------------------------------------


def manifest_entry(session: WearingSession, left_path: str, right_path: str) -> dict:
    return {
        "participant_id": session.participant_id,
        "session_index": session.session_index,
        "activity": session.activity.value,
        "left_path": left_path,
        "right_path": right_path,
    }


def session_paths(session: WearingSession) -> tuple[str, str]:
    stem = f"{session.participant_id}/session{session.session_index:02d}"
    return f"{stem}_left.csv", f"{stem}_right.csv"


def write_dataset(dataset: Dataset, directory: str | Path) -> Path:
    """Write recordings and ``manifest.json`` under ``directory``; returns the manifest path."""
    directory = Path(directory)
    entries = []
    for s in sorted(dataset.sessions, key=lambda s: s.key):
        lp, rp = session_paths(s)
        write_text_atomic(directory / lp, format_recording(s.timestamps, s.values[:, :CHANNELS_PER_EAR]))
        write_text_atomic(directory / rp, format_recording(s.timestamps, s.values[:, CHANNELS_PER_EAR:]))
        entries.append(manifest_entry(s, lp, rp))
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "sample_rate_hz": float(dataset.sample_rate_hz),
        "provenance": dataset.provenance,
        "sessions": entries,
    }
    return write_text_atomic(directory / "manifest.json", dumps_json(manifest))


def resolve_manifest(path: str | Path) -> Path:
    path = Path(path)
    return path / "manifest.json" if path.is_dir() else path


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset from a manifest file or a directory containing ``manifest.json``."""
    mpath = resolve_manifest(path)
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"{mpath}: manifest not found") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", str(mpath), e.lineno) from None
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ParseError(f"not a dataset manifest (format={manifest.get('format')!r})", str(mpath))
    if manifest.get("version") != MANIFEST_VERSION:
        raise FormatVersionError(f"{mpath}: unsupported manifest version {manifest.get('version')!r}")
    root = mpath.parent
    sessions = []
    for i, e in enumerate(manifest.get("sessions", [])):
        try:
            lp, rp = root / e["left_path"], root / e["right_path"]
            pid, idx, act = e["participant_id"], int(e["session_index"]), Activity.parse(e["activity"])
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(f"bad session entry #{i}: {err}", str(mpath)) from None
        try:
            ltext, rtext = lp.read_text(encoding="utf-8"), rp.read_text(encoding="utf-8")
        except OSError as err:
            raise InputError(f"{err.filename}: {err.strerror}") from None
        sessions.append(parse_recording(ltext, rtext, pid, idx, act, str(lp), str(rp)))
    _reject_ragged(sessions, mpath)
    return Dataset(tuple(sessions), float(manifest["sample_rate_hz"]), manifest.get("provenance", "recorded"))


def _reject_ragged(sessions: list[WearingSession], mpath: Path) -> None:
    counts: dict[str, int] = {}
    for s in sessions:
        counts[s.participant_id] = counts.get(s.participant_id, 0) + 1
    if len(set(counts.values())) > 1:
        detail = ", ".join(f"{p}={n}" for p, n in sorted(counts.items()))
        raise InputError(f"{mpath}: participants have different session counts ({detail})")
