"""Writers for protocol outputs.

Formats (UTF-8, LF, header row first, floats in shortest round-trip form):

* sweep CSV: ``threshold,far,frr``, thresholds ascending
* confusion CSV: ``true,<id1>,...,<idN>``; one row per true class in report
  class order, cells are chunk counts predicted as the column's class
* enrollment curve CSV: ``k,mean,std``, k ascending
* chunk scores CSV (``score``): ``chunk_index,t_start_s,score,decision`` for
  authentication models, ``chunk_index,t_start_s,predicted,probability``
  for identification models
* report JSON: :meth:`ProtocolReport.to_dict`, keys sorted, 2-space indent
"""

from __future__ import annotations

from pathlib import Path

from . import plotting
from .eval import ProtocolReport, SweepResult
from .fileio import format_csv, write_json_atomic, write_text_atomic

SWEEP_HEADER = ["threshold", "far", "frr"]
CURVE_HEADER = ["k", "mean", "std"]


def sweep_csv(sweep: SweepResult) -> str:
    return format_csv(SWEEP_HEADER, sweep.rows())


def confusion_csv(matrix, class_ids) -> str:
    rows = ([cid] + [int(v) for v in row] for cid, row in zip(class_ids, matrix))
    return format_csv(["true"] + list(class_ids), rows)


def curve_csv(curve) -> str:
    return format_csv(CURVE_HEADER, ((int(k), float(m), float(s)) for k, m, s in curve))


def write_report(report: ProtocolReport, out_dir: str | Path, stem: str, plots: bool = True) -> dict[str, Path]:
    """Write the JSON report plus the protocol's CSVs (and figures); returns paths by role."""
    out_dir = Path(out_dir)
    paths = {"report": write_json_atomic(out_dir / f"{stem}_report.json", report.to_dict())}
    if report.sweep is not None:
        paths["sweep"] = write_text_atomic(out_dir / f"{stem}_sweep.csv", sweep_csv(report.sweep))
        if plots:
            paths["sweep_plot"] = plotting.plot_far_frr(report.sweep, out_dir / f"{stem}_far_frr.png")
    if report.confusion is not None:
        paths["confusion"] = write_text_atomic(
            out_dir / f"{stem}_confusion.csv", confusion_csv(report.confusion, report.class_ids)
        )
        if plots:
            paths["confusion_plot"] = plotting.plot_confusion(
                report.confusion, report.class_ids, out_dir / f"{stem}_confusion.png"
            )
    if report.curve:
        paths["curve"] = write_text_atomic(out_dir / f"{stem}_curve.csv", curve_csv(report.curve))
        if plots:
            paths["curve_plot"] = plotting.plot_enrollment(report.curve, out_dir / f"{stem}_curve.png")
    return paths
