"""Linear SVM trained by dual coordinate descent, with Platt calibration and
a one-vs-rest wrapper for identification.

The trainer minimises the L2-regularised hinge loss

    0.5 * ||w~||^2 + C * sum_i max(0, 1 - y_i * w~ . x~_i)

over the augmented vectors ``x~ = (x, 1)``, so the bias is regularised along
with the weights. It works on the box-constrained dual
``min 0.5 a'Qa - sum(a), 0 <= a_i <= C``, updating one coordinate at a time
and keeping ``w~ = sum_i a_i y_i x~_i`` in sync.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import (
    CalibrationError,
    FormatVersionError,
    InputError,
    ParseError,
    StateError,
    TrainingError,
)
from .fileio import write_json_atomic
from .ingestion import Standardizer, fit_standardizer

log = logging.getLogger(__name__)

MODEL_FORMAT = "earcapauth-model"
MODEL_VERSION = 1
PLATT_MAX_ITER = 100
PLATT_GRAD_TOL = 1e-10
PLATT_MIN_STEP = 1e-10
PLATT_SIGMA = 1e-12
PLATT_A_CEILING = -1e-12


@numba.njit(cache=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _dual_cd(X, y, upper, tol, max_iter, seed):
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qii = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(d):
            s += X[i, k] * X[i, k]
        qii[i] = s
    order = np.arange(n)
    active = n
    state = np.uint64(seed)
    # shrinking bounds from the previous sweep
    pg_max_old = np.inf
    pg_min_old = -np.inf
    sweeps = 0
    violation = np.inf
    while sweeps < max_iter:
        sweeps += 1
        for i in range(active - 1, 0, -1):
            state, r = _splitmix64(state)
            j = np.int64(r % np.uint64(i + 1))
            tmp = order[i]
            order[i] = order[j]
            order[j] = tmp
        pg_max = -np.inf
        pg_min = np.inf
        violation = 0.0
        t = 0
        while t < active:
            i = order[t]
            g = 0.0
            for k in range(d):
                g += w[k] * X[i, k]
            g = y[i] * g - 1.0
            pg = 0.0
            if alpha[i] <= 0.0:
                if g > pg_max_old:
                    active -= 1
                    order[t] = order[active]
                    order[active] = i
                    continue
                if g < 0.0:
                    pg = g
            elif alpha[i] >= upper[i]:
                if g < pg_min_old:
                    active -= 1
                    order[t] = order[active]
                    order[active] = i
                    continue
                if g > 0.0:
                    pg = g
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if abs(pg) > violation:
                violation = abs(pg)
            if pg != 0.0 and qii[i] > 0.0:
                old = alpha[i]
                new = min(max(old - g / qii[i], 0.0), upper[i])
                alpha[i] = new
                step = (new - old) * y[i]
                if step != 0.0:
                    for k in range(d):
                        w[k] += step * X[i, k]
            t += 1
        if violation < tol:
            if active == n:
                break
            # converged on the active set: re-check every sample
            active = n
            pg_max_old = np.inf
            pg_min_old = -np.inf
            continue
        pg_max_old = pg_max if pg_max > 0.0 else np.inf
        pg_min_old = pg_min if pg_min < 0.0 else -np.inf
    return w, alpha, sweeps, violation


@dataclass(frozen=True)
class SvmFit:
    weights: np.ndarray
    bias: float
    alpha: np.ndarray
    sweeps: int
    violation: float
    converged: bool

    def dual_objective(self) -> float:
        w_aug = np.append(self.weights, self.bias)
        return 0.5 * float(w_aug @ w_aug) - float(self.alpha.sum())


def _check_binary(features, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or len(x) != len(y):
        raise InputError(f"features must be n x d with n = len(labels), got {x.shape} and {len(y)} labels")
    if not np.isfinite(x).all():
        raise InputError("features contain non-finite values")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise InputError("labels must be -1 or +1")
    if len(x) < 2 or not ((y > 0).any() and (y < 0).any()):
        raise TrainingError("training needs at least one sample of each label")
    return x, y


def class_upper_bounds(y: np.ndarray, c: float, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.full(len(y), float(c))
    n_pos, n_neg = (y > 0).sum(), (y < 0).sum()
    return np.where(y > 0, c * len(y) / (2.0 * n_pos), c * len(y) / (2.0 * n_neg))


def fit_linear_svm(
    features,
    labels,
    c: float,
    tolerance: float = 1e-4,
    max_iter: int = 1000,
    seed: int = 0,
    class_weight: bool = False,
) -> SvmFit:
    """Train and return the full solver state, including dual variables."""
    x, y = _check_binary(features, labels)
    if not c > 0:
        raise InputError("c must be > 0")
    x_aug = np.hstack([x, np.ones((len(x), 1))])
    upper = class_upper_bounds(y, c, class_weight)
    w, alpha, sweeps, violation = _dual_cd(x_aug, y, upper, float(tolerance), int(max_iter), int(seed))
    converged = violation < tolerance
    if not converged:
        log.debug("dual CD stopped after %d sweeps, violation %.3g", sweeps, violation)
    return SvmFit(w[:-1].copy(), float(w[-1]), alpha, int(sweeps), float(violation), bool(converged))


def train_linear_svm(features, labels, c, tolerance=1e-4, max_iter=1000, seed=0, class_weight=False):
    """``(weights, bias)`` of the soft-margin linear SVM for labels in {-1, +1}."""
    fit = fit_linear_svm(features, labels, c, tolerance, max_iter, seed, class_weight)
    return fit.weights, fit.bias


# -- Platt scaling ----------------------------------------------------------


def sigmoid_neg(z):
    """``1 / (1 + exp(z))`` without overflow."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


def _platt_objective(a, b, s, t):
    f = s * a + b
    return float(np.sum(t * f + np.maximum(-f, 0.0) + np.log1p(np.exp(-np.abs(f)))))


def fit_platt(decision_values, labels) -> tuple[float, float]:
    """Fit ``P(accept | s) = 1 / (1 + exp(a*s + b))`` with Platt's smoothed targets.

    Newton's method with a backtracking line search (Lin, Lin & Weng's
    formulation). A fit with ``a >= 0`` is clamped to a tiny negative slope
    so probability never decreases with the decision value.
    """
    s = np.asarray(decision_values, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if len(s) != len(y):
        raise InputError("decision_values and labels differ in length")
    n_pos, n_neg = int((y > 0).sum()), int((y <= 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise CalibrationError("Platt calibration needs both labels present")
    hi, lo = (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)
    t = np.where(y > 0, hi, lo)

    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = _platt_objective(a, b, s, t)
    for _ in range(PLATT_MAX_ITER):
        f = s * a + b
        p = sigmoid_neg(f)
        q = 1.0 - p
        d2 = p * q
        h11 = PLATT_SIGMA + float(np.dot(s * s, d2))
        h22 = PLATT_SIGMA + float(d2.sum())
        h21 = float(np.dot(s, d2))
        d1 = t - p
        g1, g2 = float(np.dot(s, d1)), float(d1.sum())
        if math.hypot(g1, g2) < PLATT_GRAD_TOL:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= PLATT_MIN_STEP:
            na, nb = a + step * da, b + step * db
            nf = _platt_objective(na, nb, s, t)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            log.debug("Platt line search failed; keeping current fit")
            break
    if not a < 0:
        log.warning("Platt slope %.3g is not negative; clamping to %.0e", a, PLATT_A_CEILING)
        a = PLATT_A_CEILING
    return float(a), float(b)


# -- models -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    platt_a: float | None = None
    platt_b: float | None = None
    standardizer: Standardizer | None = None
    svm_c: float = 0.025

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return len(self.weights)

    @property
    def calibrated(self) -> bool:
        return self.platt_a is not None and self.platt_b is not None

    def to_dict(self) -> dict:
        return {
            "weights": [float(v) for v in self.weights],
            "bias": self.bias,
            "platt_a": self.platt_a,
            "platt_b": self.platt_b,
            "standardizer": None if self.standardizer is None else self.standardizer.to_dict(),
            "svm_c": float(self.svm_c),
        }

    @classmethod
    def from_dict(cls, d: dict) -> LinearModel:
        std = d.get("standardizer")
        return cls(
            d["weights"],
            d["bias"],
            d.get("platt_a"),
            d.get("platt_b"),
            None if std is None else Standardizer.from_dict(std),
            d.get("svm_c", 0.025),
        )

    def __eq__(self, other):
        if not isinstance(other, LinearModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def _prepare_input(model: LinearModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise InputError(f"input has dimension {x.shape[-1]}, model expects {model.dim}")
    if model.standardizer is not None:
        x = (x - model.standardizer.mean) / model.standardizer.stddev
    return x


def decision_value(model: LinearModel, x):
    """``w . x~ + b`` for one vector (float) or a batch (array)."""
    out = _prepare_input(model, x) @ model.weights + model.bias
    return float(out) if np.ndim(out) == 0 else out


def predict_probability(model: LinearModel, x):
    if not model.calibrated:
        raise StateError("model has no Platt calibration")
    p = sigmoid_neg(model.platt_a * np.asarray(decision_value(model, x)) + model.platt_b)
    return float(p) if np.ndim(p) == 0 else p


def _inner_fold_decisions(x, y, c, tol, max_iter, seed, class_weight, folds) -> np.ndarray:
    """Out-of-fold decision values from a stratified ``folds``-way split."""
    fold = np.empty(len(y), dtype=np.int64)
    for label in (-1.0, 1.0):
        idx = np.flatnonzero(y == label)
        fold[idx] = np.arange(len(idx)) % folds
    out = np.empty(len(y))
    for k in range(folds):
        test = fold == k
        train = ~test
        if not ((y[train] > 0).any() and (y[train] < 0).any()):
            raise CalibrationError("inner calibration fold lacks one of the labels")
        fit = fit_linear_svm(x[train], y[train], c, tol, max_iter, seed, class_weight)
        out[test] = x[test] @ fit.weights + fit.bias
    return out


def train_binary_model(
    features,
    labels,
    c: float = 0.025,
    *,
    standardize: bool = True,
    standardizer: Standardizer | None = None,
    tolerance: float = 1e-4,
    max_iter: int = 1000,
    seed: int = 0,
    class_weight: bool = False,
    calibration_folds: int = 0,
) -> LinearModel:
    """Standardise (optionally), train, and Platt-calibrate one binary model."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if standardize and standardizer is None:
        standardizer = fit_standardizer(x)
    if not standardize:
        standardizer = None
    xs = x if standardizer is None else (x - standardizer.mean) / standardizer.stddev
    fit = fit_linear_svm(xs, y, c, tolerance, max_iter, seed, class_weight)
    if calibration_folds:
        scores = _inner_fold_decisions(xs, y, c, tolerance, max_iter, seed, class_weight, calibration_folds)
    else:
        scores = xs @ fit.weights + fit.bias
    a, b = fit_platt(scores, y)
    return LinearModel(fit.weights, fit.bias, a, b, standardizer, c)


@dataclass(frozen=True, eq=False)
class OvrModel:
    class_ids: tuple[str, ...]
    models: tuple[LinearModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(str(c) for c in self.class_ids))
        object.__setattr__(self, "models", tuple(self.models))
        if len(set(self.class_ids)) != len(self.class_ids):
            raise InputError("class_ids must be unique")
        if len(self.models) != len(self.class_ids):
            raise InputError("one model per class required")

    @property
    def dim(self) -> int:
        return self.models[0].dim

    def to_dict(self) -> dict:
        return {"class_ids": list(self.class_ids), "models": [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, d: dict) -> OvrModel:
        return cls(tuple(d["class_ids"]), tuple(LinearModel.from_dict(m) for m in d["models"]))

    def __eq__(self, other):
        if not isinstance(other, OvrModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def train_ovr(
    features,
    class_labels: Sequence,
    c: float = 0.025,
    *,
    standardize: bool = True,
    tolerance: float = 1e-4,
    max_iter: int = 1000,
    seed: int = 0,
    class_weight: bool = False,
    calibration_folds: int = 0,
) -> OvrModel:
    """One calibrated binary model per class (class vs. rest), classes sorted.

    All per-class models share one standardizer fitted on ``features``.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray([str(v) for v in class_labels], dtype=object)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise TrainingError(f"one-vs-rest needs at least 2 classes, got {len(classes)}")
    std = fit_standardizer(x) if standardize else None
    models = []
    for cls in classes:
        y = np.where(labels == cls, 1.0, -1.0)
        models.append(
            train_binary_model(
                x,
                y,
                c,
                standardize=standardize,
                standardizer=std,
                tolerance=tolerance,
                max_iter=max_iter,
                seed=seed,
                class_weight=class_weight,
                calibration_folds=calibration_folds,
            )
        )
    return OvrModel(tuple(classes), tuple(models))


def class_probabilities(model: OvrModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise InputError(f"input has dimension {x.shape[-1]}, model expects {model.dim}")
    return np.stack([np.asarray(predict_probability(m, x)) for m in model.models], axis=-1)


def predict_class(model: OvrModel, x):
    """Class with the highest calibrated probability; ties go to the earlier class.

    A single vector returns one identifier, a batch returns a list.
    """
    probs = class_probabilities(model, x)
    idx = np.argmax(probs, axis=-1)
    if np.ndim(idx) == 0:
        return model.class_ids[int(idx)]
    return [model.class_ids[int(i)] for i in idx]


# -- persistence -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelFile:
    """A persisted authentication (``kind='auth'``) or identification model."""

    kind: str
    model: LinearModel | OvrModel
    target: str | None = None
    threshold: float | None = None
    pipeline: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "target": self.target,
            "threshold": self.threshold,
            "pipeline": dict(self.pipeline),
            "model": self.model.to_dict(),
        }

    def with_threshold(self, threshold: float) -> ModelFile:
        return replace(self, threshold=float(threshold))


def save_model(path: str | Path, model_file: ModelFile) -> Path:
    return write_json_atomic(path, model_file.to_dict())


def load_model(path: str | Path) -> ModelFile:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"{path}: model file not found") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", str(path), e.lineno) from None
    return model_from_dict(d, str(path))


def model_from_dict(d: dict, source: str = "<model>") -> ModelFile:
    if d.get("format") != MODEL_FORMAT:
        raise ParseError(f"not a model file (format={d.get('format')!r})", source)
    if d.get("version") != MODEL_VERSION:
        raise FormatVersionError(f"{source}: unsupported model version {d.get('version')!r}")
    kind = d.get("kind")
    if kind == "auth":
        model = LinearModel.from_dict(d["model"])
    elif kind == "id":
        model = OvrModel.from_dict(d["model"])
    else:
        raise ParseError(f"unknown model kind {kind!r}", source)
    return ModelFile(kind, model, d.get("target"), d.get("threshold"), d.get("pipeline") or {})
