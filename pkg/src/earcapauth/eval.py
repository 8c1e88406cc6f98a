"""Score sweeps, equal error rate, and the session-based evaluation protocols.

Score convention: a sample is accepted when its score is ``>= threshold``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Activity, Dataset, PipelineConfig
from .errors import InputError, ProtocolError
from .ingestion import ChunkTable, chunk_dataset
from .svm import predict_class, predict_probability, train_binary_model, train_ovr


@dataclass(frozen=True, eq=False)
class SweepResult:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float

    def rows(self):
        return zip(self.thresholds.tolist(), self.far.tolist(), self.frr.tolist())

    def frr_at_far(self, target_far: float) -> float:
        """FRR at the lowest threshold whose FAR does not exceed ``target_far``."""
        ok = np.flatnonzero(self.far <= target_far)
        return float(self.frr[ok[0]]) if len(ok) else 1.0


def _check_scores(genuine, impostor) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(genuine, dtype=np.float64).reshape(-1)
    i = np.asarray(impostor, dtype=np.float64).reshape(-1)
    if len(g) == 0 or len(i) == 0:
        raise InputError("genuine and impostor score lists must be non-empty")
    if not (np.isfinite(g).all() and np.isfinite(i).all()):
        raise InputError("scores must be finite")
    return g, i


def far_frr_at_threshold(genuine_scores, impostor_scores, t: float) -> tuple[float, float]:
    g, i = _check_scores(genuine_scores, impostor_scores)
    return float(np.mean(i >= t)), float(np.mean(g < t))


def _rates(g: np.ndarray, i: np.ndarray, thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gs, is_ = np.sort(g), np.sort(i)
    far = (len(is_) - np.searchsorted(is_, thresholds, side="left")) / len(is_)
    frr = np.searchsorted(gs, thresholds, side="left") / len(gs)
    return far, frr


def sweep_thresholds(genuine_scores, impostor_scores, grid: Sequence[float] | None = None) -> SweepResult:
    """FAR/FRR over a threshold set and the interpolated equal error rate.

    Without ``grid`` the thresholds are every distinct score, plus 0 and 1,
    plus one point just above the largest score so the sweep always ends at
    FAR = 0. The EER is read off by linear interpolation between the two
    adjacent thresholds where FAR - FRR changes sign.
    """
    g, i = _check_scores(genuine_scores, impostor_scores)
    if grid is None:
        top = max(g.max(), i.max(), 1.0)
        thresholds = np.unique(np.concatenate([g, i, [0.0, 1.0, np.nextafter(top, np.inf)]]))
    else:
        thresholds = np.unique(np.asarray(grid, dtype=np.float64))
        if len(thresholds) == 0:
            raise InputError("threshold grid is empty")
    far, frr = _rates(g, i, thresholds)
    eer, eer_t = _interpolate_eer(thresholds, far, frr)
    return SweepResult(thresholds, far, frr, eer, eer_t)


def _interpolate_eer(t, far, frr) -> tuple[float, float]:
    diff = far - frr
    cross = np.flatnonzero(diff <= 0)
    if len(cross) == 0:
        # grid never reaches FAR <= FRR; best available point
        return float(max(far[-1], frr[-1])), float(t[-1])
    k = int(cross[0])
    if diff[k] == 0 or k == 0:
        return float(max(far[k], frr[k])), float(t[k])
    frac = diff[k - 1] / (diff[k - 1] - diff[k])
    eer = far[k - 1] + frac * (far[k] - far[k - 1])
    thr = t[k - 1] + frac * (t[k] - t[k - 1])
    return float(eer), float(thr)


# -- protocol reports ---------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    fold: int
    train_sessions: dict[str, list[int]]
    test_sessions: dict[str, list[int]]

    def overlap(self) -> dict[str, list[int]]:
        return {
            p: sorted(set(self.train_sessions.get(p, [])) & set(t))
            for p, t in self.test_sessions.items()
            if set(self.train_sessions.get(p, [])) & set(t)
        }

    def to_dict(self) -> dict:
        return {"fold": self.fold, "train_sessions": self.train_sessions, "test_sessions": self.test_sessions}


@dataclass(eq=False)
class ProtocolReport:
    protocol: str
    metric: str
    per_user: dict[str, dict]
    pooled: dict
    folds: list[FoldAssignment]
    config: dict
    dataset: dict
    fold_metrics: list[dict] = field(default_factory=list)
    class_ids: list[str] = field(default_factory=list)
    sweep: SweepResult | None = None
    confusion: np.ndarray | None = None
    fold_confusions: list[np.ndarray] = field(default_factory=list)
    curve: list[tuple[int, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "protocol": self.protocol,
            "metric": self.metric,
            "per_user": self.per_user,
            "pooled": self.pooled,
            "folds": [f.to_dict() for f in self.folds],
            "fold_metrics": self.fold_metrics,
            "config": self.config,
            "dataset": self.dataset,
        }
        if self.class_ids:
            d["class_ids"] = self.class_ids
        if self.confusion is not None:
            d["confusion"] = self.confusion.tolist()
        if self.curve:
            d["curve"] = [{"k": k, "mean": m, "std": s} for k, m, s in self.curve]
        return d

    def summary(self) -> str:
        if self.metric == "eer":
            return f"{self.protocol}: pooled EER {self.pooled['eer']:.2%}"
        if self.curve:
            k, m, s = self.curve[-1]
            return f"{self.protocol}: accuracy at k={k} {m:.2%} +/- {s:.2%}"
        return f"{self.protocol}: accuracy {self.pooled['accuracy_mean']:.2%} +/- {self.pooled['accuracy_std']:.2%}"


def _dataset_info(dataset: Dataset) -> dict:
    return {
        "provenance": dataset.provenance,
        "sample_rate_hz": float(dataset.sample_rate_hz),
        "participants": dataset.participants,
        "n_sessions": len(dataset.sessions),
    }


def _config_echo(config: PipelineConfig) -> dict:
    return dataclasses.asdict(config)


def _sessions_by_activity(dataset: Dataset, activity: Activity, what: str) -> list[int]:
    """Session indices with ``activity``, required identical for every participant."""
    per = {p: [s.session_index for s in ss if s.activity == activity] for p, ss in dataset.by_participant().items()}
    if not per:
        raise ProtocolError("dataset has no sessions")
    ref_p, ref = next(iter(per.items()))
    for p, idx in per.items():
        if not idx:
            raise ProtocolError(f"participant {p} has no {activity.value} sessions ({what})")
        if idx != ref:
            raise ProtocolError(
                f"{what} needs the same {activity.value} sessions for every participant: "
                f"{p} has {idx}, {ref_p} has {ref}"
            )
    return ref


def _need_participants(dataset: Dataset, n: int = 2) -> list[str]:
    participants = dataset.participants
    if len(participants) < n:
        raise ProtocolError(f"protocol needs at least {n} participants, dataset has {len(participants)}")
    return participants


def _train_kwargs(config: PipelineConfig) -> dict:
    return dict(
        standardize=config.standardize,
        tolerance=config.svm_tol,
        max_iter=config.svm_max_iter,
        seed=config.rng_seed,
        class_weight=config.class_weight,
        calibration_folds=config.platt_inner_folds,
    )


def _session_mask(table: ChunkTable, sessions) -> np.ndarray:
    return np.isin(table.session_indices, np.asarray(list(sessions), dtype=np.int64))


def _auth_scores(train: ChunkTable, test: ChunkTable, target: str, config: PipelineConfig):
    y = np.where(train.participant_ids == target, 1.0, -1.0)
    model = train_binary_model(train.features, y, config.svm_c, **_train_kwargs(config))
    scores = np.asarray(predict_probability(model, test.features))
    own = test.participant_ids == target
    return scores[own], scores[~own]


def _auth_report(protocol, dataset, config, folds, scored: dict[str, tuple[list, list]]) -> ProtocolReport:
    per_user = {}
    all_g, all_i = [], []
    for p, (gen, imp) in scored.items():
        g, i = np.concatenate(gen), np.concatenate(imp)
        sw = sweep_thresholds(g, i)
        per_user[p] = {
            "eer": sw.eer,
            "eer_threshold": sw.eer_threshold,
            "frr_at_far_1pct": sw.frr_at_far(0.01),
            "n_genuine": int(len(g)),
            "n_impostor": int(len(i)),
        }
        all_g.append(g)
        all_i.append(i)
    pooled_sweep = sweep_thresholds(np.concatenate(all_g), np.concatenate(all_i))
    user_eers = [u["eer"] for u in per_user.values()]
    pooled = {
        "eer": pooled_sweep.eer,
        "eer_threshold": pooled_sweep.eer_threshold,
        "frr_at_far_1pct": pooled_sweep.frr_at_far(0.01),
        "mean_user_eer": float(np.mean(user_eers)),
        "std_user_eer": float(np.std(user_eers)),
    }
    return ProtocolReport(
        protocol, "eer", per_user, pooled, folds, _config_echo(config), _dataset_info(dataset), sweep=pooled_sweep
    )


def auth_folds(rest_sessions: Sequence[int], n_folds: int) -> list[tuple[list[int], list[int]]]:
    """``(train, test)`` session lists: consecutive groups of the sorted rest sessions."""
    rest = sorted(rest_sessions)
    groups = np.array_split(np.asarray(rest, dtype=np.int64), n_folds)
    return [([s for s in rest if s not in set(g.tolist())], g.tolist()) for g in groups]


def auth_protocol(
    dataset: Dataset,
    config: PipelineConfig,
    table: ChunkTable | None = None,
    targets: Sequence[str] | None = None,
) -> ProtocolReport:
    """Stratified leave-k-sessions-out authentication over the rest sessions.

    Each participant in turn is the target: the model learns the target's
    training chunks as accept and every other participant's training chunks
    as reject, then scores all test-session chunks. With 12 rest sessions and
    3 folds that is 8 training and 4 test sessions per participant.
    ``targets`` restricts which participants take the target role.
    """
    participants = _need_participants(dataset)
    rest = _sessions_by_activity(dataset, Activity.REST, "authentication protocol")
    if len(rest) < config.auth_folds + 1:
        p = participants[0]
        raise ProtocolError(
            f"participant {p} has {len(rest)} rest sessions; {config.auth_folds}-fold authentication "
            f"needs at least {config.auth_folds + 1}"
        )
    table = chunk_dataset(dataset, config) if table is None else table
    rest_table = table.select(table.activities == Activity.REST.value)
    splits = auth_folds(rest, config.auth_folds)
    folds = [
        FoldAssignment(f, {p: tr for p in participants}, {p: te for p in participants})
        for f, (tr, te) in enumerate(splits)
    ]
    if targets is None:
        targets = participants
    unknown = sorted(set(targets) - set(participants))
    if unknown:
        raise ProtocolError(f"unknown target participant(s): {', '.join(unknown)}")
    scored: dict[str, tuple[list, list]] = {p: ([], []) for p in targets}
    for train_s, test_s in splits:
        train = rest_table.select(_session_mask(rest_table, train_s))
        test = rest_table.select(_session_mask(rest_table, test_s))
        for p in targets:
            g, i = _auth_scores(train, test, p, config)
            scored[p][0].append(g)
            scored[p][1].append(i)
    return _auth_report("auth", dataset, config, folds, scored)


def confusion_matrix(true, pred, class_ids: Sequence[str]) -> np.ndarray:
    index = {c: k for k, c in enumerate(class_ids)}
    m = np.zeros((len(class_ids), len(class_ids)), dtype=np.int64)
    for t, p in zip(true, pred):
        m[index[str(t)], index[str(p)]] += 1
    return m


def _id_fold(train: ChunkTable, test: ChunkTable, class_ids, config: PipelineConfig):
    model = train_ovr(train.features, train.participant_ids, config.svm_c, **_train_kwargs(config))
    pred = predict_class(model, test.features) if len(test) else []
    cm = confusion_matrix(test.participant_ids, pred, class_ids)
    return cm, float(np.trace(cm) / cm.sum())


def _id_rest_sessions(dataset: Dataset, what: str) -> list[int]:
    rest = _sessions_by_activity(dataset, Activity.REST, what)
    if len(rest) < 2:
        raise ProtocolError(f"{what} needs at least 2 rest sessions per participant, found {len(rest)}")
    return rest


def id_protocol(dataset: Dataset, config: PipelineConfig, table: ChunkTable | None = None) -> ProtocolReport:
    """Stratified leave-one-session-out identification over the rest sessions."""
    participants = _need_participants(dataset)
    rest = _id_rest_sessions(dataset, "identification protocol")
    table = chunk_dataset(dataset, config) if table is None else table
    rest_table = table.select(table.activities == Activity.REST.value)
    folds, confusions, accs = [], [], []
    for f, test_s in enumerate(rest):
        train_s = [s for s in rest if s != test_s]
        folds.append(FoldAssignment(f, {p: train_s for p in participants}, {p: [test_s] for p in participants}))
        cm, acc = _id_fold(
            rest_table.select(_session_mask(rest_table, train_s)),
            rest_table.select(rest_table.session_indices == test_s),
            participants,
            config,
        )
        confusions.append(cm)
        accs.append(acc)
    return _id_report("id", dataset, config, participants, folds, confusions, accs)


def _id_report(protocol, dataset, config, participants, folds, confusions, accs) -> ProtocolReport:
    total = np.sum(confusions, axis=0)
    per_user = {
        p: {"accuracy": float(total[k, k] / total[k].sum()) if total[k].sum() else None, "n_test": int(total[k].sum())}
        for k, p in enumerate(participants)
    }
    pooled = {
        "accuracy_mean": float(np.mean(accs)),
        "accuracy_std": float(np.std(accs)),
        "accuracy_pooled": float(np.trace(total) / total.sum()),
    }
    fold_metrics = [{"fold": f.fold, "accuracy": a} for f, a in zip(folds, accs)]
    return ProtocolReport(
        protocol,
        "accuracy",
        per_user,
        pooled,
        folds,
        _config_echo(config),
        _dataset_info(dataset),
        fold_metrics=fold_metrics,
        class_ids=list(participants),
        confusion=total,
        fold_confusions=list(confusions),
    )


def motion_eval(dataset: Dataset, config: PipelineConfig, task: str, table: ChunkTable | None = None) -> ProtocolReport:
    """Train on every rest session, test on every walking session."""
    if task not in ("auth", "id"):
        raise InputError(f"task must be 'auth' or 'id', got {task!r}")
    participants = _need_participants(dataset)
    rest = _sessions_by_activity(dataset, Activity.REST, "motion evaluation")
    walking = _sessions_by_activity(dataset, Activity.WALKING, "motion evaluation")
    table = chunk_dataset(dataset, config) if table is None else table
    train = table.select(table.activities == Activity.REST.value)
    test = table.select(table.activities == Activity.WALKING.value)
    folds = [FoldAssignment(0, {p: rest for p in participants}, {p: walking for p in participants})]
    if task == "auth":
        scored = {}
        for p in participants:
            g, i = _auth_scores(train, test, p, config)
            scored[p] = ([g], [i])
        return _auth_report("motion-auth", dataset, config, folds, scored)
    cm, acc = _id_fold(train, test, participants, config)
    return _id_report("motion-id", dataset, config, participants, folds, [cm], [acc])


def enrollment_curve(
    dataset: Dataset,
    config: PipelineConfig,
    max_sessions: int | None = None,
    seconds_per_session: float | None = None,
) -> ProtocolReport:
    """Identification accuracy against the number of enrollment sessions.

    Uses the leave-one-session-out folds; for ``k = 1..max_sessions`` each
    fold trains on its first ``k`` training sessions (by index), each cut to
    the first ``seconds_per_session`` of retained data when given.
    """
    participants = _need_participants(dataset)
    rest = _id_rest_sessions(dataset, "enrollment curve")
    if max_sessions is None:
        max_sessions = len(rest) - 1
    if not 1 <= max_sessions < len(rest):
        raise ProtocolError(f"max_sessions must be in [1, {len(rest) - 1}] with {len(rest)} rest sessions")
    full = chunk_dataset(dataset, config)
    full = full.select(full.activities == Activity.REST.value)
    if seconds_per_session is None:
        train_table = full
    else:
        if not seconds_per_session > 0:
            raise InputError("seconds_per_session must be > 0")
        train_table = chunk_dataset(dataset, config, seconds=seconds_per_session)
        train_table = train_table.select(train_table.activities == Activity.REST.value)

    folds = []
    acc = np.zeros((max_sessions, len(rest)))
    for f, test_s in enumerate(rest):
        train_s = [s for s in rest if s != test_s]
        folds.append(
            FoldAssignment(f, {p: train_s[:max_sessions] for p in participants}, {p: [test_s] for p in participants})
        )
        test = full.select(full.session_indices == test_s)
        for k in range(1, max_sessions + 1):
            train = train_table.select(_session_mask(train_table, train_s[:k]))
            if len(np.unique(train.participant_ids)) < len(participants):
                raise ProtocolError(
                    f"fold {f}, k={k}: some participants have no training chunks "
                    f"(seconds_per_session={seconds_per_session})"
                )
            _, acc[k - 1, f] = _id_fold(train, test, participants, config)
    curve = [(k, float(acc[k - 1].mean()), float(acc[k - 1].std())) for k in range(1, max_sessions + 1)]
    fold_metrics = [
        {"fold": f, "k": k, "accuracy": float(acc[k - 1, f])} for k in range(1, max_sessions + 1) for f in range(len(rest))
    ]
    k, m, s = curve[-1]
    pooled = {"accuracy_mean": m, "accuracy_std": s, "k": k, "seconds_per_session": seconds_per_session}
    return ProtocolReport(
        "enroll-curve",
        "accuracy",
        {},
        pooled,
        folds,
        _config_echo(config),
        _dataset_info(dataset),
        fold_metrics=fold_metrics,
        class_ids=list(participants),
        curve=curve,
    )
