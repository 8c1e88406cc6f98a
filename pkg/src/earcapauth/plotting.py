"""Report figures rendered next to the CSV outputs.

Figures are drawn on the Agg canvas directly so importing this module never
touches the global pyplot backend.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
}
FAR_COLOR = "tab:blue"
FRR_COLOR = "tab:orange"


def _new_figure(width=4.0, height=3.0):
    fig = Figure(figsize=(width, height), layout="constrained")
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no Software/date metadata so reruns give identical files
    fig.savefig(path, metadata={"Software": None})
    return path


def plot_far_frr(sweep, path, title: str | None = None) -> Path:
    """FAR and FRR against the accept threshold with the EER point marked."""
    with mpl.rc_context(STYLE):
        fig, ax = _new_figure()
        ax.plot(sweep.thresholds, sweep.far, color=FAR_COLOR, label="FAR", drawstyle="steps-post")
        ax.plot(sweep.thresholds, sweep.frr, color=FRR_COLOR, label="FRR", drawstyle="steps-post")
        ax.plot([sweep.eer_threshold], [sweep.eer], "o", color="tab:red", label=f"EER {sweep.eer:.2%}")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.0)
        ax.set_xlabel("Accept threshold")
        ax.set_ylabel("Error rate")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_confusion(matrix, class_ids: Sequence[str], path, title: str | None = None) -> Path:
    m = np.asarray(matrix, dtype=float)
    rows = m.sum(axis=1, keepdims=True)
    frac = np.divide(m, rows, out=np.zeros_like(m), where=rows > 0)
    size = max(3.5, 0.25 * len(class_ids) + 1.5)
    with mpl.rc_context(STYLE):
        fig, ax = _new_figure(size + 0.8, size)
        im = ax.imshow(frac, vmin=0.0, vmax=1.0, cmap="viridis")
        ticks = np.arange(len(class_ids))
        ax.set_xticks(ticks, labels=class_ids, rotation=90)
        ax.set_yticks(ticks, labels=class_ids)
        ax.set_xlabel("Predicted")
        ax.set_ylabel("True")
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, label="Fraction of true class")
        return _save(fig, path)


def plot_enrollment(curve, path, title: str | None = None) -> Path:
    """Mean identification accuracy per enrollment-session count, shaded by one std."""
    k = np.array([c[0] for c in curve], dtype=float)
    mean = np.array([c[1] for c in curve])
    std = np.array([c[2] for c in curve])
    with mpl.rc_context(STYLE):
        fig, ax = _new_figure()
        ax.fill_between(k, mean - std, np.minimum(mean + std, 1.0), alpha=0.25, color=FAR_COLOR, linewidth=0)
        ax.plot(k, mean, "o-", color=FAR_COLOR, markersize=3)
        ax.set_xticks(k)
        ax.set_ylim(0.0, 1.0)
        ax.set_xlabel("Enrollment sessions")
        ax.set_ylabel("Identification accuracy")
        if title:
            ax.set_title(title)
        return _save(fig, path)
