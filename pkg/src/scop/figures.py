"""Matplotlib figure rendering for the CLI report paths.

Every renderer writes PNG files next to the delimited output and returns the
paths written. Rendering is deterministic: the Agg backend, fixed figure
sizes and dpi, and fixed PNG metadata, so repeated runs of the same
configuration produce identical bytes.
"""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .cli_io import VERSION  # noqa: E402
from .intervals import METHODS, Intervals  # noqa: E402
from .simulate import ExperimentResult  # noqa: E402

_SAVE = {"dpi": 120, "metadata": {"Software": f"scop {VERSION}"}}
_LABELS = {
    "scop": "SCOP",
    "scop_plus": "SCOP+",
    "ocp": "OCP",
    "acp": "ACP",
}
_COLORS = {
    "scop": "tab:blue",
    "scop_plus": "tab:cyan",
    "ocp": "tab:orange",
    "acp": "tab:green",
}


def _present_methods(result: ExperimentResult) -> list[str]:
    present = {s.method for s in result.summaries}
    return [m for m in METHODS if m in present]


def _save(fig: plt.Figure, path: str) -> str:
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def render_simulation(result: ExperimentResult, out_dir: str, stem: str) -> list[str]:
    """Boxplots of per-repetition miscoverage and interval length by method."""
    methods = _present_methods(result)
    alpha = result.config.alpha
    written = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    fcps = [[r.methods[m].fcp for r in result.records] for m in methods]
    ax.boxplot(fcps, tick_labels=[_LABELS[m] for m in methods], showmeans=True)
    ax.axhline(alpha, color="crimson", linestyle="--", linewidth=1.0, label=f"target {alpha:g}")
    ax.set_ylabel("false coverage proportion")
    ax.set_title(f"Miscoverage by method ({result.config.reps} repetitions)")
    ax.legend(loc="upper right")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    written.append(_save(fig, os.path.join(out_dir, f"{stem}_fcp.png")))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    lengths = [
        [
            r.methods[m].avg_length
            for r in result.records
            if r.methods[m].avg_length is not None and not r.methods[m].infinite
        ]
        for m in methods
    ]
    kept = [i for i, vals in enumerate(lengths) if vals]
    if kept:
        ax.boxplot(
            [lengths[i] for i in kept],
            tick_labels=[_LABELS[methods[i]] for i in kept],
            showmeans=True,
        )
    ax.set_ylabel("average interval length")
    ax.set_title("Interval length by method (finite repetitions)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    written.append(_save(fig, os.path.join(out_dir, f"{stem}_length.png")))
    return written


def render_sweep(
    param: str,
    values: Sequence[object],
    results: Sequence[ExperimentResult],
    out_dir: str,
    stem: str,
) -> list[str]:
    """FCR and mean-length curves over the sweep grid, one line per method."""
    labels = [
        ",".join(str(v) for v in value) if isinstance(value, (tuple, list)) else str(value)
        for value in values
    ]
    xs = np.arange(len(labels))
    methods = _present_methods(results[0])
    alpha = results[0].config.alpha
    written = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in methods:
        fcrs = [next(s.fcr for s in r.summaries if s.method == method) for r in results]
        ax.plot(xs, fcrs, marker="o", color=_COLORS[method], label=_LABELS[method])
    ax.axhline(alpha, color="crimson", linestyle="--", linewidth=1.0, label=f"target {alpha:g}")
    ax.set_xticks(xs, labels)
    ax.set_xlabel(param)
    ax.set_ylabel("false coverage rate")
    ax.set_title(f"FCR over {param}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    written.append(_save(fig, os.path.join(out_dir, f"{stem}_fcr.png")))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in methods:
        means = [next(s.mean_length for s in r.summaries if s.method == method) for r in results]
        pts = [(x, v) for x, v in zip(xs, means) if v is not None]
        if pts:
            ax.plot(*zip(*pts), marker="o", color=_COLORS[method], label=_LABELS[method])
    ax.set_xticks(xs, labels)
    ax.set_xlabel(param)
    ax.set_ylabel("mean interval length")
    ax.set_title(f"Interval length over {param}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    written.append(_save(fig, os.path.join(out_dir, f"{stem}_length.png")))
    return written


def render_intervals(
    intervals_by_method: Mapping[str, Intervals],
    y: np.ndarray | None,
    out_dir: str,
    stem: str,
) -> list[str]:
    """Selected-unit intervals sorted by predicted response, one panel per
    method, with the true responses overlaid when known."""
    methods = [m for m in METHODS if m in intervals_by_method]
    fig, axes = plt.subplots(
        len(methods), 1, figsize=(6.5, 2.6 * len(methods)), sharex=True, squeeze=False
    )
    for ax, method in zip(axes[:, 0], methods):
        ivs = intervals_by_method[method]
        centers = 0.5 * (ivs.lo + ivs.hi)
        sort_key = np.where(np.isfinite(centers), centers, np.inf)
        order = np.argsort(sort_key, kind="stable")
        xs = np.arange(order.size)
        lo = ivs.lo[order]
        hi = ivs.hi[order]
        finite_hi = np.where(np.isfinite(hi), hi, np.nan)
        finite_lo = np.where(np.isfinite(lo), lo, np.nan)
        ax.fill_between(xs, finite_lo, finite_hi, color=_COLORS[method], alpha=0.35, step="mid")
        ax.plot(xs, centers[order], color=_COLORS[method], linewidth=1.0, label="interval center")
        if y is not None:
            truth = np.asarray(y, dtype=float)[ivs.unit[order]]
            covered = (truth >= lo) & (truth <= hi)
            ax.scatter(xs[covered], truth[covered], s=9, color="black", label="observed")
            if np.any(~covered):
                ax.scatter(xs[~covered], truth[~covered], s=12, color="crimson", label="missed")
        ax.set_ylabel(_LABELS[method])
        ax.legend(loc="upper left", fontsize=8)
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel("selected units, sorted by interval center")
    fig.suptitle("Prediction intervals on selected units")
    fig.tight_layout()
    path = _save(fig, os.path.join(out_dir, f"{stem}_intervals.png"))
    return [path]
