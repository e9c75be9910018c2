"""Robust moment estimators and seasonal curves.

The four moments used throughout are outlier-tolerant alternatives to the
classical ones:

* mean: arithmetic average,
* volatility: population standard deviation (divisor n),
* skewness: 6 * (mean - median) / volatility,
* kurtosis: 24 * (1 - sqrt(pi/2) * meanAbsDev / volatility) + skewness^2,

calibrated so a Gaussian sample scores 0 on both shape moments. A cell needs
at least two observations and nonzero dispersion; cells that fail are missing
(every statistic NaN), never silently zero.

Two reductions share the estimators: per (stock, point) across days, and per
(day, point) across the stock cross-section. Seasonal curves then average the
surviving cells per point, carrying effective cell counts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import SampleTooSmallError, ZeroDispersionError
from .market_data import SessionSpec
from .observables import ObservablePanel
from .timeutil import format_time_of_day

_HALF_PI_SQRT = math.sqrt(math.pi / 2.0)

STAT_MEAN = "mean"
STAT_VOLATILITY = "volatility"
STAT_SKEWNESS = "skewness"
STAT_KURTOSIS = "kurtosis"
STAT_ABS_MEAN = "abs_mean"

AGG_STOCK = "stock_average"
AGG_TIME = "time_average"


@dataclass(frozen=True)
class RobustMoments:
    mean: float
    volatility: float
    skewness: float
    kurtosis: float
    median: float
    n: int


def robust_moments(sample, kurtosis_skew_term: bool = True) -> RobustMoments:
    """Moments of a 1-d sample.

    Raises SampleTooSmallError for n < 2 and ZeroDispersionError when every
    value is identical (volatility 0 leaves the shape moments undefined).
    """
    arr = np.asarray(sample, dtype=np.float64).ravel()
    if arr.size < 2:
        raise SampleTooSmallError(f"need at least 2 observations, got {arr.size}")
    if not np.isfinite(arr).all():
        raise ValueError("sample contains non-finite values")
    mean = float(arr.sum() / arr.size)
    dev = arr - mean
    vol = float(np.sqrt((dev * dev).sum() / arr.size))
    if vol == 0.0:
        raise ZeroDispersionError("zero dispersion: all sample values identical")
    median = float(np.median(arr))
    skew = 6.0 * (mean - median) / vol
    mad = float(np.abs(dev).sum() / arr.size)
    kurt = 24.0 * (1.0 - _HALF_PI_SQRT * mad / vol)
    if kurtosis_skew_term:
        kurt += skew * skew
    return RobustMoments(mean, vol, skew, kurt, median, int(arr.size))


def _reduce(values: np.ndarray, axis: int, kurtosis_skew_term: bool) -> dict[str, np.ndarray]:
    """Vectorized robust moments along one axis; failing cells come out NaN."""
    finite = np.isfinite(values)
    cnt = finite.sum(axis=axis)
    complete = bool(finite.all())

    with np.errstate(invalid="ignore", divide="ignore"):
        if complete:
            mean = values.mean(axis=axis)
            median = np.median(values, axis=axis)
        else:
            safe = np.where(finite, values, 0.0)
            mean = safe.sum(axis=axis) / cnt
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                median = np.nanmedian(values, axis=axis)
        dev = values - np.expand_dims(mean, axis)
        if not complete:
            dev = np.where(finite, dev, 0.0)
        vol = np.sqrt((dev * dev).sum(axis=axis) / cnt)
        mad = np.abs(dev).sum(axis=axis) / cnt
        valid = (cnt >= 2) & (vol > 0.0)
        skew = 6.0 * (mean - median) / vol
        kurt = 24.0 * (1.0 - _HALF_PI_SQRT * mad / vol)
        if kurtosis_skew_term:
            kurt = kurt + skew * skew

    out = {
        STAT_MEAN: mean,
        STAT_VOLATILITY: vol,
        STAT_SKEWNESS: skew,
        STAT_KURTOSIS: kurt,
        "median": median,
    }
    bad = ~valid
    for arr in out.values():
        arr[bad] = np.nan
    out["count"] = np.where(valid, cnt, 0).astype(np.int64)
    out["n_missing"] = int(bad.sum())
    return out


@dataclass
class SingleStockMoments:
    """Per (stock, point) moments taken across days. Arrays are (N, P)."""

    kind: str
    spec: SessionSpec
    symbols: tuple[str, ...]
    point_times_ms: np.ndarray
    mean: np.ndarray
    volatility: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    median: np.ndarray
    count: np.ndarray
    n_missing: int

    def statistic(self, name: str) -> np.ndarray:
        return getattr(self, name)


@dataclass
class CrossSectionMoments:
    """Per (day, point) moments taken across the stock universe. Arrays are (D, P)."""

    kind: str
    spec: SessionSpec
    point_times_ms: np.ndarray
    mean: np.ndarray
    volatility: np.ndarray
    skewness: np.ndarray
    kurtosis: np.ndarray
    median: np.ndarray
    count: np.ndarray
    n_missing: int

    def statistic(self, name: str) -> np.ndarray:
        return getattr(self, name)


def single_stock_moments(obs: ObservablePanel) -> SingleStockMoments:
    """Reduce an observable panel across days, one cell per (stock, point)."""
    r = _reduce(obs.values, axis=1, kurtosis_skew_term=True)
    return SingleStockMoments(
        kind=obs.kind,
        spec=obs.spec,
        symbols=obs.symbols,
        point_times_ms=obs.point_times_ms.copy(),
        mean=r[STAT_MEAN],
        volatility=r[STAT_VOLATILITY],
        skewness=r[STAT_SKEWNESS],
        kurtosis=r[STAT_KURTOSIS],
        median=r["median"],
        count=r["count"],
        n_missing=r["n_missing"],
    )


def cross_section_moments(obs: ObservablePanel, kurtosis_skew_term: bool = True) -> CrossSectionMoments:
    """Reduce an observable panel across stocks, one cell per (day, point).

    ``kurtosis_skew_term=False`` drops the +skewness^2 correction from the
    cross-sectional kurtosis (the plain estimator form) and is exposed on the
    CLI as ``--cross-kurtosis plain``.
    """
    r = _reduce(obs.values, axis=0, kurtosis_skew_term=kurtosis_skew_term)
    return CrossSectionMoments(
        kind=obs.kind,
        spec=obs.spec,
        point_times_ms=obs.point_times_ms.copy(),
        mean=r[STAT_MEAN],
        volatility=r[STAT_VOLATILITY],
        skewness=r[STAT_SKEWNESS],
        kurtosis=r[STAT_KURTOSIS],
        median=r["median"],
        count=r["count"],
        n_missing=r["n_missing"],
    )


@dataclass
class SeasonalCurve:
    """One statistic as a function of the bin clock, plus effective counts."""

    statistic: str
    aggregation: str
    kind: str
    bin_seconds: int
    open_ms: int
    point_times_ms: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def bin_indices(self) -> np.ndarray:
        step = self.bin_seconds * 1000
        return ((self.point_times_ms - self.open_ms) // step).astype(np.int64)


def _average_cells(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean across axis 0 skipping missing cells; returns (values, counts)."""
    finite = np.isfinite(cells)
    cnt = finite.sum(axis=0)
    with np.errstate(invalid="ignore"):
        vals = np.where(finite, cells, 0.0).sum(axis=0) / cnt
    vals[cnt == 0] = np.nan
    return vals, cnt.astype(np.int64)


def _curve(statistic, aggregation, src, cells) -> SeasonalCurve:
    vals, cnt = _average_cells(cells)
    return SeasonalCurve(
        statistic=statistic,
        aggregation=aggregation,
        kind=src.kind,
        bin_seconds=src.spec.bin_seconds,
        open_ms=src.spec.open_ms,
        point_times_ms=src.point_times_ms.copy(),
        values=vals,
        counts=cnt,
    )


def stock_average(ssm: SingleStockMoments) -> dict[str, SeasonalCurve]:
    """Average each statistic over stocks, per point: the [.] bracket."""
    return {
        stat: _curve(stat, AGG_STOCK, ssm, ssm.statistic(stat))
        for stat in (STAT_MEAN, STAT_VOLATILITY, STAT_SKEWNESS, STAT_KURTOSIS)
    }


def time_average(csm: CrossSectionMoments) -> dict[str, SeasonalCurve]:
    """Average each statistic over days, per point: the <.> bracket.

    Also emits ``abs_mean``, the day-average of |cross-sectional mean|, which
    tracks dispersion when signed index moves cancel.
    """
    out = {
        stat: _curve(stat, AGG_TIME, csm, csm.statistic(stat))
        for stat in (STAT_MEAN, STAT_VOLATILITY, STAT_SKEWNESS, STAT_KURTOSIS)
    }
    out[STAT_ABS_MEAN] = _curve(STAT_ABS_MEAN, AGG_TIME, csm, np.abs(csm.mean))
    return out


def volatility_proxies(
    obs: ObservablePanel, kurtosis_skew_term: bool = True
) -> dict[str, SeasonalCurve]:
    """The three volatility readings on one axis.

    ``stock_avg_volatility`` averages per-stock time volatilities, while
    ``dispersion`` and ``abs_mean`` come from the cross-section: the first is
    the day-averaged dispersion, the second the day-averaged absolute mean.
    """
    ssm = single_stock_moments(obs)
    csm = cross_section_moments(obs, kurtosis_skew_term=kurtosis_skew_term)
    sa = stock_average(ssm)
    ta = time_average(csm)
    return {
        "stock_avg_volatility": sa[STAT_VOLATILITY],
        "dispersion": ta[STAT_VOLATILITY],
        "abs_mean": ta[STAT_ABS_MEAN],
    }


def export_curves_csv(curves, out: TextIO) -> int:
    """Write curves as bin_index,bin_time,statistic,aggregation,value,count.

    Missing points keep an empty value field. Returns the row count.
    """
    out.write("bin_index,bin_time,statistic,aggregation,value,count\n")
    n_rows = 0
    for curve in curves:
        idx = curve.bin_indices()
        for k in range(curve.values.shape[0]):
            t = format_time_of_day(int(curve.point_times_ms[k]))
            v = curve.values[k]
            val = f"{v:.12g}" if np.isfinite(v) else ""
            out.write(f"{idx[k]},{t},{curve.statistic},{curve.aggregation},{val},{curve.counts[k]}\n")
            n_rows += 1
    return n_rows


def export_stock_paths_csv(ssm: SingleStockMoments, out: TextIO) -> int:
    """Un-averaged per-stock moment paths: symbol,bin_index,bin_time,statistic,value."""
    out.write("symbol,bin_index,bin_time,statistic,value\n")
    step = ssm.spec.bin_seconds * 1000
    idx = ((ssm.point_times_ms - ssm.spec.open_ms) // step).astype(np.int64)
    times = [format_time_of_day(int(t)) for t in ssm.point_times_ms]
    n_rows = 0
    for stat in (STAT_MEAN, STAT_VOLATILITY, STAT_SKEWNESS, STAT_KURTOSIS):
        arr = ssm.statistic(stat)
        for s, symbol in enumerate(ssm.symbols):
            for k in range(arr.shape[1]):
                v = arr[s, k]
                val = f"{v:.12g}" if np.isfinite(v) else ""
                out.write(f"{symbol},{idx[k]},{times[k]},{stat},{val}\n")
                n_rows += 1
    return n_rows


def export_day_paths_csv(csm: CrossSectionMoments, out: TextIO) -> int:
    """Un-averaged per-day moment paths: date,bin_index,bin_time,statistic,value."""
    out.write("date,bin_index,bin_time,statistic,value\n")
    step = csm.spec.bin_seconds * 1000
    idx = ((csm.point_times_ms - csm.spec.open_ms) // step).astype(np.int64)
    times = [format_time_of_day(int(t)) for t in csm.point_times_ms]
    dates = csm.spec.date_strings()
    n_rows = 0
    for stat in (STAT_MEAN, STAT_VOLATILITY, STAT_SKEWNESS, STAT_KURTOSIS):
        arr = csm.statistic(stat)
        for t, day in enumerate(dates):
            for k in range(arr.shape[1]):
                v = arr[t, k]
                val = f"{v:.12g}" if np.isfinite(v) else ""
                out.write(f"{day},{idx[k]},{times[k]},{stat},{val}\n")
                n_rows += 1
    return n_rows
