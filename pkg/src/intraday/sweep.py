"""Re-run the binning and moment pipeline over a grid of bin sizes.

Ticks are parsed once; every bin size gets its own panel built through the
exact same code path as a single-resolution run, so a one-element grid is
bitwise identical to calling the pieces directly. Curves from different bin
sizes are then compared at the bin limits they share.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .binning import POLICY_EXCLUDE, build_panel
from .market_data import SessionSpec, TickStore
from .moments import SeasonalCurve, cross_section_moments, time_average
from .observables import (
    KIND_RELATIVE,
    KIND_RETURNS,
    compute_relative_prices,
    compute_returns,
)
from .timeutil import format_time_of_day

logger = logging.getLogger(__name__)

DEFAULT_GRID = (30, 60, 120, 300, 600)

# Relative deviations are skipped for pairs where both sides sit below this
# floor; they agree to machine precision in any meaningful sense.
TINY = 1e-8


@dataclass(frozen=True)
class OverlapScore:
    """How far two curves drift apart at their shared bin limits."""

    kind: str
    statistic: str
    bin_seconds_a: int
    bin_seconds_b: int
    max_rel_dev: float
    mean_rel_dev: float
    n_shared: int
    n_compared: int
    n_skipped: int


@dataclass
class SweepResult:
    """Per-resolution curves for each observable kind."""

    base_spec: SessionSpec
    grid: tuple[int, ...]
    kinds: tuple[str, ...]
    # bin_seconds -> kind -> statistic -> curve (time averages)
    curves: dict[int, dict[str, dict[str, SeasonalCurve]]]
    n_excluded: dict[int, int]


def run_sweep(
    store: TickStore,
    grid: Sequence[int] | None = None,
    kinds: Sequence[str] = (KIND_RETURNS, KIND_RELATIVE),
    policy: str = POLICY_EXCLUDE,
    kurtosis_skew_term: bool = True,
    threads: int = 1,
) -> SweepResult:
    """Build panels and time-averaged curves for every bin size in the grid.

    Resolutions are independent, so they can run on a thread pool; the output
    does not depend on `threads`.
    """
    base = store.spec
    grid = tuple(int(t) for t in (grid if grid is not None else DEFAULT_GRID))
    if not grid:
        raise ValueError("bin size grid is empty")
    for kind in kinds:
        if kind not in (KIND_RETURNS, KIND_RELATIVE):
            raise ValueError(f"unknown observable kind {kind!r}")

    def one_resolution(t: int) -> tuple[int, dict[str, dict[str, SeasonalCurve]], int]:
        panel = build_panel(store, base.with_bin_seconds(t), policy=policy)
        per_kind: dict[str, dict[str, SeasonalCurve]] = {}
        for kind in kinds:
            obs = compute_returns(panel) if kind == KIND_RETURNS else compute_relative_prices(panel)
            cross = cross_section_moments(obs, kurtosis_skew_term=kurtosis_skew_term)
            per_kind[kind] = time_average(cross)
        logger.info("sweep: T=%ds done (%d stock-days excluded)", t, panel.n_excluded)
        return t, per_kind, panel.n_excluded

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = list(pool.map(one_resolution, grid))
    else:
        done = [one_resolution(t) for t in grid]

    curves = {t: per_kind for t, per_kind, _ in done}
    excluded = {t: n for t, _, n in done}
    return SweepResult(
        base_spec=base, grid=grid, kinds=tuple(kinds), curves=curves, n_excluded=excluded
    )


def overlap_score(curve_a: SeasonalCurve, curve_b: SeasonalCurve) -> OverlapScore:
    """Relative deviation between two curves at shared bin limits.

    Points missing on either side are skipped, as are points where both
    values are below TINY. Raises ValueError when the curves share no limits.
    """
    if curve_a.kind != curve_b.kind or curve_a.statistic != curve_b.statistic:
        raise ValueError("overlap needs curves of the same kind and statistic")
    shared, ia, ib = np.intersect1d(
        curve_a.point_times_ms, curve_b.point_times_ms, return_indices=True
    )
    if shared.size == 0:
        raise ValueError(
            f"curves at T={curve_a.bin_seconds}s and T={curve_b.bin_seconds}s share no bin limits"
        )
    va = curve_a.values[ia]
    vb = curve_b.values[ib]
    scale = np.maximum(np.abs(va), np.abs(vb))
    usable = np.isfinite(va) & np.isfinite(vb) & (scale >= TINY)
    devs = np.abs(va - vb)[usable] / scale[usable]
    n_compared = int(usable.sum())
    return OverlapScore(
        kind=curve_a.kind,
        statistic=curve_a.statistic,
        bin_seconds_a=curve_a.bin_seconds,
        bin_seconds_b=curve_b.bin_seconds,
        max_rel_dev=float(devs.max()) if n_compared else float("nan"),
        mean_rel_dev=float(devs.mean()) if n_compared else float("nan"),
        n_shared=int(shared.size),
        n_compared=n_compared,
        n_skipped=int(shared.size) - n_compared,
    )


def overlap_table(
    result: SweepResult, statistics: Sequence[str] = ("mean", "volatility")
) -> list[OverlapScore]:
    """Overlap scores for every bin size pair, kind, and statistic."""
    rows = []
    for kind in result.kinds:
        for stat in statistics:
            for i, ta in enumerate(result.grid):
                for tb in result.grid[i + 1 :]:
                    rows.append(
                        overlap_score(result.curves[ta][kind][stat], result.curves[tb][kind][stat])
                    )
    return rows


def kurtosis_vs_binsize(result: SweepResult, kind: str = KIND_RETURNS) -> dict[int, float]:
    """Average cross-sectional kurtosis over the central half of the session.

    The window [open + S/4, open + 3S/4) dodges the open and close, where bin
    populations thin out at coarse resolutions.
    """
    if kind not in result.kinds:
        raise ValueError(f"sweep holds no {kind!r} curves")
    spec = result.base_spec
    lo = spec.open_ms + spec.session_seconds * 250
    hi = spec.open_ms + spec.session_seconds * 750
    out: dict[int, float] = {}
    for t in result.grid:
        curve = result.curves[t][kind]["kurtosis"]
        sel = (curve.point_times_ms >= lo) & (curve.point_times_ms < hi)
        vals = curve.values[sel]
        vals = vals[np.isfinite(vals)]
        out[t] = float(vals.mean()) if vals.size else float("nan")
    return out


def export_sweep_curves_csv(result: SweepResult, out: TextIO) -> int:
    """Rows: T_seconds,bin_limit,kind,statistic,aggregation,value."""
    out.write("T_seconds,bin_limit,kind,statistic,aggregation,value\n")
    n_rows = 0
    for t in result.grid:
        for kind in result.kinds:
            for stat, curve in result.curves[t][kind].items():
                for j in range(curve.values.shape[0]):
                    v = curve.values[j]
                    val = f"{v:.12g}" if np.isfinite(v) else ""
                    limit = format_time_of_day(int(curve.point_times_ms[j]))
                    out.write(f"{t},{limit},{kind},{stat},{curve.aggregation},{val}\n")
                    n_rows += 1
    return n_rows


def export_overlap_csv(scores: Sequence[OverlapScore], out: TextIO) -> int:
    """Rows: kind,statistic,T_a,T_b,max_rel_dev,mean_rel_dev,n_shared,n_skipped."""
    out.write("kind,statistic,T_a,T_b,max_rel_dev,mean_rel_dev,n_shared,n_skipped\n")
    for s in scores:
        mx = f"{s.max_rel_dev:.12g}" if np.isfinite(s.max_rel_dev) else ""
        mn = f"{s.mean_rel_dev:.12g}" if np.isfinite(s.mean_rel_dev) else ""
        out.write(
            f"{s.kind},{s.statistic},{s.bin_seconds_a},{s.bin_seconds_b},"
            f"{mx},{mn},{s.n_shared},{s.n_skipped}\n"
        )
    return len(scores)
