"""Command-line entry point.

Exit status: 0 on success, 1 on data/protocol errors (diagnostic on stderr),
2 on usage errors. Output files go to ``--out``, which defaults to
``$EARCAPAUTH_OUT`` or ``./out``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import Activity, PipelineConfig, errors_only, validate_dataset
from .errors import EarCapError, InputError
from .eval import auth_protocol, enrollment_curve, id_protocol, motion_eval
from .fileio import format_csv, write_text_atomic
from .ingestion import chunk_dataset, chunk_means, load_dataset, parse_recording, trim_session
from .report import write_report
from .svm import (
    LinearModel,
    ModelFile,
    class_probabilities,
    load_model,
    predict_probability,
    save_model,
    train_binary_model,
    train_ovr,
)
from .synth import GeneratorParams, calibrated_params, export_dataset, generate_dataset

log = logging.getLogger("earcapauth")

OUT_ENV = "EARCAPAUTH_OUT"
DEFAULT_AUTH_THRESHOLD = 0.5


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV) or "out")


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--seed", type=int, default=0, help="solver shuffle seed")
    g.add_argument("--chunk-len", type=int, default=5, help="frames per chunk (default 5)")
    g.add_argument("--head-trim", type=float, default=15.0, help="seconds cut from the start (default 15)")
    g.add_argument("--tail-trim", type=float, default=5.0, help="seconds cut from the end (default 5)")
    g.add_argument("--svm-c", type=float, default=0.025, help="SVM regularization C (default 0.025)")
    g.add_argument("--no-standardize", action="store_true", help="train on raw counts")
    g.add_argument("--class-weight", action="store_true", help="balance class weights")
    g.add_argument("--platt-folds", type=int, default=0, help="inner folds for Platt calibration (0 = off)")


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")


def pipeline_config(args, sample_rate_hz: float = 15.0) -> PipelineConfig:
    try:
        return PipelineConfig(
            chunk_len_frames=args.chunk_len,
            head_trim_s=args.head_trim,
            tail_trim_s=args.tail_trim,
            svm_c=args.svm_c,
            sample_rate_hz=sample_rate_hz,
            rng_seed=args.seed,
            standardize=not args.no_standardize,
            class_weight=args.class_weight,
            platt_inner_folds=args.platt_folds,
        )
    except ValueError as e:
        raise InputError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earcapauth", description="Capacitive ear-canal biometrics pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--params", type=Path, help="generator params JSON (default: calibrated settings)")
    p.add_argument("--participants", type=int)
    p.add_argument("--rest-sessions", type=int)
    p.add_argument("--walking-sessions", type=int)
    p.add_argument("--duration", type=float, help="session length in seconds")
    p.add_argument("--user-sigma", type=float)
    p.add_argument("--session-sigma", type=float)
    p.add_argument("--frame-sigma", type=float)
    p.add_argument("--motion-sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--out", type=Path, default=None, help="dataset directory")

    p = sub.add_parser("validate", help="check a dataset against the data model")
    p.add_argument("dataset", type=Path)

    for name, help_ in (
        ("eval-auth", "leave-4-sessions-out authentication"),
        ("eval-id", "leave-one-session-out identification"),
        ("eval-motion", "train on rest, test on walking"),
        ("enroll-curve", "identification accuracy vs. enrollment sessions"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("dataset", type=Path)
        _add_pipeline_args(p)
        _add_out(p)
        if name == "eval-motion":
            p.add_argument("--task", choices=("auth", "id"), default="id")
        if name == "enroll-curve":
            p.add_argument("--max-sessions", type=int, default=None)
            p.add_argument("--seconds-per-session", type=float, default=None)

    p = sub.add_parser("train", help="train and store an authentication or identification model")
    p.add_argument("dataset", type=Path)
    p.add_argument("--task", choices=("auth", "id"), required=True)
    p.add_argument("--target", help="target participant (auth)")
    p.add_argument("--model", type=Path, default=None, help="model file (default OUT/model.json)")
    _add_pipeline_args(p)
    _add_out(p)

    p = sub.add_parser("score", help="score one recording with a stored model")
    p.add_argument("model", type=Path)
    p.add_argument("--left", type=Path, required=True, help="left-ear recording CSV")
    p.add_argument("--right", type=Path, required=True, help="right-ear recording CSV")
    p.add_argument("--threshold", type=float, default=None, help="accept threshold (auth; default from model)")
    p.add_argument("-o", "--out", type=Path, default=None)
    return parser


def _out_dir(args) -> Path:
    return args.out if args.out is not None else default_out()


def cmd_synth(args) -> int:
    if args.params:
        try:
            params = GeneratorParams.from_dict(json.loads(args.params.read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise InputError(f"{args.params}:{e.lineno}: invalid JSON: {e.msg}") from None
    else:
        params = calibrated_params()
    overrides = {
        "n_participants": args.participants,
        "n_rest_sessions": args.rest_sessions,
        "n_walking_sessions": args.walking_sessions,
        "session_duration_s": args.duration,
        "user_sigma": args.user_sigma,
        "session_sigma": args.session_sigma,
        "frame_sigma": args.frame_sigma,
        "motion_sigma_extra": args.motion_sigma,
        "rng_seed": args.seed,
    }
    params = dataclasses.replace(params, **{k: v for k, v in overrides.items() if v is not None})
    dataset = generate_dataset(params)
    manifest = export_dataset(dataset, _out_dir(args), params)
    print(f"synth: {len(dataset.sessions)} sessions, {params.n_participants} participants -> {manifest}")
    return 0


def cmd_validate(args) -> int:
    dataset = load_dataset(args.dataset)
    violations = validate_dataset(dataset)
    for v in violations:
        print(v)
    n_err = len(errors_only(violations))
    n_warn = len(violations) - n_err
    suffix = f", {n_warn} warnings" if n_warn else ""
    print(f"validate: {n_err} violations{suffix} in {len(dataset.sessions)} sessions")
    return 1 if n_err else 0


def _load_for_eval(args):
    dataset = load_dataset(args.dataset)
    bad = errors_only(validate_dataset(dataset))
    if bad:
        raise InputError(f"dataset has {len(bad)} violations, first: {bad[0]}")
    return dataset, pipeline_config(args, dataset.sample_rate_hz)


def _emit(report, args, stem) -> int:
    paths = write_report(report, _out_dir(args), stem, plots=not args.no_plots)
    print(f"{report.summary()} -> {paths['report']}")
    return 0


def cmd_eval_auth(args) -> int:
    dataset, config = _load_for_eval(args)
    return _emit(auth_protocol(dataset, config), args, "auth")


def cmd_eval_id(args) -> int:
    dataset, config = _load_for_eval(args)
    return _emit(id_protocol(dataset, config), args, "id")


def cmd_eval_motion(args) -> int:
    dataset, config = _load_for_eval(args)
    return _emit(motion_eval(dataset, config, args.task), args, f"motion_{args.task}")


def cmd_enroll_curve(args) -> int:
    dataset, config = _load_for_eval(args)
    report = enrollment_curve(dataset, config, args.max_sessions, args.seconds_per_session)
    return _emit(report, args, "enroll")


def cmd_train(args) -> int:
    dataset, config = _load_for_eval(args)
    table = chunk_dataset(dataset, config)
    rest = table.select(table.activities == Activity.REST.value)
    kwargs = dict(
        standardize=config.standardize,
        tolerance=config.svm_tol,
        max_iter=config.svm_max_iter,
        seed=config.rng_seed,
        class_weight=config.class_weight,
        calibration_folds=config.platt_inner_folds,
    )
    pipeline = dataclasses.asdict(config)
    if args.task == "auth":
        if not args.target:
            raise InputError("--target is required for --task auth")
        evaluation = auth_protocol(dataset, config, table, targets=[args.target])
        stats = evaluation.per_user[args.target]
        y = np.where(rest.participant_ids == args.target, 1.0, -1.0)
        model = train_binary_model(rest.features, y, config.svm_c, **kwargs)
        mf = ModelFile("auth", model, args.target, stats["eer_threshold"], pipeline)
        what = f"auth model for {args.target} (EER {stats['eer']:.2%}, threshold {stats['eer_threshold']:.4g})"
    else:
        model = train_ovr(rest.features, rest.participant_ids, config.svm_c, **kwargs)
        mf = ModelFile("id", model, None, None, pipeline)
        what = f"identification model for {len(model.class_ids)} participants"
    path = save_model(args.model or _out_dir(args) / "model.json", mf)
    print(f"train: {what} -> {path}")
    return 0


def score_recording(mf: ModelFile, left_text: str, right_text: str, threshold: float | None = None, sources=(None, None)):
    """Per-chunk decisions for one recording: ``(header, rows, summary)``."""
    config = PipelineConfig(**mf.pipeline) if mf.pipeline else PipelineConfig()
    session = parse_recording(left_text, right_text, "unknown", 1, Activity.REST, *sources)
    session = trim_session(session, config.head_trim_s, config.tail_trim_s)
    feats = chunk_means(session.values, config.chunk_len_frames)
    n = len(feats)
    starts = session.timestamps[: n * config.chunk_len_frames : config.chunk_len_frames]
    if feats.shape[1] != mf.model.dim:
        raise InputError(f"recording has {feats.shape[1]} channels, model expects {mf.model.dim}")
    if n == 0:
        raise InputError("recording yields no complete chunk after trimming")
    if mf.kind == "auth":
        assert isinstance(mf.model, LinearModel)
        t = threshold if threshold is not None else (mf.threshold if mf.threshold is not None else DEFAULT_AUTH_THRESHOLD)
        probs = np.atleast_1d(predict_probability(mf.model, feats))
        accept = probs >= t
        rows = [(i, float(s), float(p), "accept" if a else "reject") for i, (s, p, a) in enumerate(zip(starts, probs, accept))]
        verdict = "accept" if accept.sum() * 2 > n else "reject"
        summary = f"score: {verdict} ({int(accept.sum())}/{n} chunks accepted at threshold {t:.4g}, target {mf.target})"
        return ["chunk_index", "t_start_s", "score", "decision"], rows, summary
    probs = np.atleast_2d(class_probabilities(mf.model, feats))
    idx = np.argmax(probs, axis=1)
    pred = [mf.model.class_ids[i] for i in idx]
    rows = [(i, float(s), p, float(probs[i, k])) for i, (s, p, k) in enumerate(zip(starts, pred, idx))]
    counts = {c: pred.count(c) for c in mf.model.class_ids}
    best = max(mf.model.class_ids, key=lambda c: counts[c])
    summary = f"score: {best} ({counts[best]}/{n} chunks)"
    return ["chunk_index", "t_start_s", "predicted", "probability"], rows, summary


def cmd_score(args) -> int:
    mf = load_model(args.model)
    try:
        left, right = args.left.read_text(encoding="utf-8"), args.right.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"{e.filename}: {e.strerror}") from None
    header, rows, summary = score_recording(mf, left, right, args.threshold, (str(args.left), str(args.right)))
    path = write_text_atomic(_out_dir(args) / "scores.csv", format_csv(header, rows))
    print(f"{summary} -> {path}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "validate": cmd_validate,
    "eval-auth": cmd_eval_auth,
    "eval-id": cmd_eval_id,
    "eval-motion": cmd_eval_motion,
    "enroll-curve": cmd_enroll_curve,
    "train": cmd_train,
    "score": cmd_score,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except EarCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e.filename or ''}: {e.strerror}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
