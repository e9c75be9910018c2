"""Render result figures to PNG files next to the delimited outputs.

Loaded only when figures are requested, so the plotting stack stays out of
the import path of plain data runs. Everything draws through the Agg backend
and returns the list of files written.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

logger = logging.getLogger(__name__)

_DPI = 150

_STAT_LABEL = {
    "mean": "mean",
    "volatility": "volatility",
    "skewness": "skewness",
    "kurtosis": "kurtosis",
    "abs_mean": "mean magnitude",
}


def _hours(times_ms: np.ndarray) -> np.ndarray:
    return np.asarray(times_ms, dtype=np.float64) / 3.6e6


def _finish(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    logger.info("figure written: %s", path)
    return path


def save_curve_figures(curves: dict, out_dir: Path, stem: str) -> list[Path]:
    """One panel per statistic for a family of seasonal curves."""
    out_dir = Path(out_dir)
    stats = [s for s in ("mean", "volatility", "skewness", "kurtosis", "abs_mean") if s in curves]
    n = len(stats)
    if n == 0:
        return []
    ncols = 2 if n > 1 else 1
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(5.0 * ncols, 3.2 * nrows), squeeze=False)
    for ax in axes.flat[n:]:
        ax.set_visible(False)
    for ax, stat in zip(axes.flat, stats):
        c = curves[stat]
        ax.plot(_hours(c.point_times_ms), c.values, marker=".", lw=1.0, ms=3)
        ax.set_xlabel("time of day [h]")
        ax.set_ylabel(_STAT_LABEL.get(stat, stat))
        ax.grid(alpha=0.3)
    fig.suptitle(stem.replace("_", " "))
    return [_finish(fig, out_dir / f"{stem}.png")]


def save_proxy_figure(proxies: dict, out_dir: Path, stem: str = "volatility_proxies") -> list[Path]:
    """Overlay the three volatility proxies on one axis."""
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for name, curve in proxies.items():
        ax.plot(_hours(curve.point_times_ms), curve.values, marker=".", lw=1.0, ms=3, label=name)
    ax.set_xlabel("time of day [h]")
    ax.set_ylabel("scale")
    ax.grid(alpha=0.3)
    ax.legend()
    return [_finish(fig, out_dir / f"{stem}.png")]


def save_spectrum_figures(result, out_dir: Path) -> list[Path]:
    """Top-eigenvalue fractions and mean correlation per bin, per subset."""
    out_dir = Path(out_dir)
    hours = _hours(result.point_times_ms)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11.0, 4.0))
    for sub in result.subsets:
        lam1 = result.eigenvalues[sub.label][:, 0]
        ax1.plot(hours, lam1 / sub.size, marker=".", lw=1.0, ms=3, label=f"{sub.label} (N0={sub.size})")
        ax2.plot(hours, result.mean_corr[sub.label], marker=".", lw=1.0, ms=3, label=sub.label)
    ax1.set_xlabel("time of day [h]")
    ax1.set_ylabel("largest eigenvalue / N0")
    ax1.grid(alpha=0.3)
    ax1.legend()
    ax2.set_xlabel("time of day [h]")
    ax2.set_ylabel("mean off-diagonal correlation")
    ax2.grid(alpha=0.3)
    ax2.legend()
    return [_finish(fig, out_dir / "spectrum.png")]


def save_sweep_figures(
    result, out_dir: Path, statistics: Sequence[str] = ("volatility",)
) -> list[Path]:
    """Overlay time-averaged curves across bin sizes, one figure per kind."""
    out_dir = Path(out_dir)
    paths = []
    for kind in result.kinds:
        stats = [s for s in statistics if s in result.curves[result.grid[0]][kind]]
        if not stats:
            continue
        fig, axes = plt.subplots(1, len(stats), figsize=(5.5 * len(stats), 4.0), squeeze=False)
        for ax, stat in zip(axes.flat, stats):
            for t in result.grid:
                c = result.curves[t][kind][stat]
                ax.plot(_hours(c.point_times_ms), c.values, marker=".", lw=0.9, ms=3, label=f"T={t}s")
            ax.set_xlabel("time of day [h]")
            ax.set_ylabel(_STAT_LABEL.get(stat, stat))
            ax.set_title(kind)
            ax.grid(alpha=0.3)
            ax.legend(fontsize=8)
        paths.append(_finish(fig, out_dir / f"sweep_{kind}.png"))
    return paths


def save_anomaly_figure(report, out_dir: Path, top_n: int = 15) -> list[Path]:
    """Horizontal bars for the highest combined scores."""
    out_dir = Path(out_dir)
    rows = report.top(top_n)
    rows = [r for r in rows if np.isfinite(r[1])]
    if not rows:
        return []
    labels = [r[0] for r in rows][::-1]
    vals = [r[1] for r in rows][::-1]
    fig, ax = plt.subplots(figsize=(7.0, 0.35 * len(rows) + 1.5))
    ax.barh(np.arange(len(rows)), vals)
    ax.set_yticks(np.arange(len(rows)), labels=labels, fontsize=8)
    ax.set_xlabel("combined anomaly score (RMS z)")
    ax.grid(alpha=0.3, axis="x")
    ax.set_title(f"{report.entity_kind} screening")
    return [_finish(fig, out_dir / f"anomaly_{report.entity_kind}.png")]


def save_coverage_figure(panel, out_dir: Path) -> list[Path]:
    """Inclusion map of the stock-day panel."""
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.imshow(panel.included, aspect="auto", interpolation="nearest", cmap="Greys")
    ax.set_xlabel("day index")
    ax.set_ylabel("stock index")
    ax.set_title("included stock-days")
    return [_finish(fig, out_dir / "coverage.png")]


def save_profile_figure(truth, out_dir: Path) -> list[Path]:
    """Per-minute volatility profile used by a synthetic run."""
    out_dir = Path(out_dir)
    prof = np.asarray(truth.profile_per_minute, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(np.arange(prof.shape[0]), prof, lw=1.2)
    ax.set_xlabel("minute of session")
    ax.set_ylabel("per-second volatility")
    ax.grid(alpha=0.3)
    return [_finish(fig, out_dir / "profile.png")]
