"""Static figures written next to the tabular outputs.

Uses the object-oriented matplotlib API with an Agg canvas so nothing
touches global pyplot state or needs a display.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .analysis import Bin, FitResult, StatsRow

KIND_COLORS = {"RAV": "tab:blue", "XEB": "tab:orange"}


def _new_figure(width: float = 6.0, height: float = 4.0):
    fig = Figure(figsize=(width, height))
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig: Figure, path: Path) -> None:
    fig.tight_layout()
    # drop the version stamp so reruns stay byte-identical across installs
    fig.savefig(path, dpi=120, metadata={"Software": None})


def plot_decay(
    path: Path,
    runs: Mapping[str, Sequence[Bin]],
    pooled: Sequence[Bin],
    fits: Mapping[str, FitResult],
    title: str = "",
) -> None:
    """Binned decay curves: thin line per run, error bars for pooled bins, one curve per fit."""
    fig, ax = _new_figure()
    for bins in runs.values():
        ax.plot([b.m for b in bins], [b.mean for b in bins], color="0.75", lw=0.6)
    ax.errorbar(
        [b.m for b in pooled], [b.mean for b in pooled], yerr=[b.sem for b in pooled],
        fmt="o", color="k", ms=4, capsize=2, label="binned mean",
    )
    if pooled:
        m = np.linspace(0.0, max(b.m for b in pooled) * 1.05, 200)
        for fit in fits.values():
            ax.plot(m, fit.predict(m), label=f"{fit.model}: alpha={fit.alpha:.5f}, chi2_r={fit.chi2_reduced:.3g}")
    ax.set_xlabel("layers m")
    ax.set_ylabel("estimated fidelity")
    ax.set_title(title)
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_run_statistics(path: Path, rows: Sequence[StatsRow]) -> None:
    """Mean fidelity loss with one-SD bars against shots per run."""
    fig, ax = _new_figure()
    for kind in ("RAV", "XEB"):
        pts = [(r.shots, getattr(r, kind.lower())) for r in rows if getattr(r, kind.lower()) is not None]
        if not pts:
            continue
        k = [p[0] for p in pts]
        mean = [p[1].mean for p in pts]
        sd = [p[1].sd or 0.0 for p in pts]
        ax.errorbar(k, mean, yerr=sd, fmt="o-", capsize=3, color=KIND_COLORS[kind], label=kind)
    ax.set_xscale("log")
    ax.set_xlabel("shots per sequence K")
    ax.set_ylabel("fidelity loss")
    ax.legend()
    _save(fig, path)


def plot_cost_traces(path: Path, traces: Sequence[np.ndarray], title: str = "") -> None:
    """Every run's cost trace plus the mean trace, on a log scale."""
    fig, ax = _new_figure()
    for t in traces:
        ax.plot(np.arange(t.size), t, color="tab:blue", lw=0.4, alpha=0.6)
    if traces:
        ax.plot(np.mean(np.vstack(traces), axis=0), color="k", lw=1.5, label="mean")
        ax.legend()
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    ax.set_title(title)
    _save(fig, path)


def plot_path_distance(path: Path, series: Mapping[str, Sequence[tuple[np.ndarray, np.ndarray]]]) -> None:
    """Path distance against elapsed evolution time, one panel per method."""
    methods = list(series)
    fig = Figure(figsize=(6.0, 2.2 * max(len(methods), 1)))
    FigureCanvasAgg(fig)
    for i, method in enumerate(methods, start=1):
        ax = fig.add_subplot(len(methods), 1, i)
        for t, d in series[method]:
            ax.plot(t, d, lw=0.6)
        ax.set_ylabel(f"{method}\ndistance")
    if methods:
        fig.axes[-1].set_xlabel("elapsed time (ms)")
    _save(fig, path)
