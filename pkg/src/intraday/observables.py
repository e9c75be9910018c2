"""Per-bin observables derived from a price panel.

Three kinds share one container:

* ``returns``: forward relative price changes, point k covers bins k -> k+1,
  so a K-bin panel yields K-1 points timestamped at the left limit.
* ``relative``: price relative to the first bin of the same day, K points,
  identically zero at k=1.
* ``normalized``: returns divided by the cross-sectional dispersion of that
  bin-day, which removes the seasonal volatility scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .binning import PricePanel
from .errors import DegenerateCrossSectionError
from .market_data import SessionSpec

KIND_RETURNS = "returns"
KIND_RELATIVE = "relative"
KIND_NORMALIZED = "normalized"

KINDS = (KIND_RETURNS, KIND_RELATIVE, KIND_NORMALIZED)


@dataclass
class ObservablePanel:
    """Observable values on the (stock, day, point) grid.

    ``values[s, d, :]`` is NaN for excluded stock-days. ``point_times_ms``
    gives each point's clock coordinate (used to align different bin widths):
    the left bin limit for returns and normalized returns, the bin's own limit
    for relative prices.
    """

    kind: str
    spec: SessionSpec
    symbols: tuple[str, ...]
    values: np.ndarray  # (N, D, P) float64
    included: np.ndarray  # (N, D) bool
    point_times_ms: np.ndarray  # (P,) int64

    @property
    def n_points(self) -> int:
        return int(self.values.shape[2])

    def bin_indices(self) -> np.ndarray:
        """1-based bin index of each point: (time - open) / bin width.

        Returns points sit at the left limit of the change they measure, so
        point k with time open + k*T indexes x(k) for both kinds.
        """
        step = self.spec.bin_seconds * 1000
        return ((self.point_times_ms - self.spec.open_ms) // step).astype(np.int64)


def compute_returns(panel: PricePanel) -> ObservablePanel:
    """Forward returns (P(k+1) - P(k)) / P(k) for k = 1..K-1."""
    px = panel.prices
    vals = (px[:, :, 1:] - px[:, :, :-1]) / px[:, :, :-1]
    return ObservablePanel(
        kind=KIND_RETURNS,
        spec=panel.spec,
        symbols=panel.symbols,
        values=vals,
        included=panel.included.copy(),
        point_times_ms=panel.bin_limits_ms[:-1].copy(),
    )


def compute_relative_prices(panel: PricePanel) -> ObservablePanel:
    """Prices relative to the day's first bin: (P(k) - P(1)) / P(1), zero at k=1."""
    px = panel.prices
    base = px[:, :, :1]
    vals = (px - base) / base
    vals[:, :, 0] = np.where(panel.included, 0.0, np.nan)  # exact zero, not rounding residue
    return ObservablePanel(
        kind=KIND_RELATIVE,
        spec=panel.spec,
        symbols=panel.symbols,
        values=vals,
        included=panel.included.copy(),
        point_times_ms=panel.bin_limits_ms.copy(),
    )


def normalize_returns(returns: ObservablePanel, dispersion: np.ndarray) -> ObservablePanel:
    """Divide returns by per-(day, point) cross-sectional dispersion.

    Args:
        returns: a ``returns`` panel.
        dispersion: array of shape (D, P) holding the cross-sectional standard
            deviation of each bin-day (NaN where unavailable).

    Raises:
        DegenerateCrossSectionError: some bin-day that still has included
            stocks carries zero or missing dispersion, e.g. a single-stock
            universe or a bin where all stocks printed identical values.
    """
    if returns.kind != KIND_RETURNS:
        raise ValueError(f"expected a returns panel, got kind={returns.kind!r}")
    d, p = returns.values.shape[1], returns.values.shape[2]
    if dispersion.shape != (d, p):
        raise ValueError(f"dispersion shape {dispersion.shape} != {(d, p)}")

    used_days = returns.included.any(axis=0)  # day has at least one included stock
    sigma = np.asarray(dispersion, dtype=np.float64)
    bad = used_days[:, None] & (~np.isfinite(sigma) | (sigma <= 0.0))
    if bad.any():
        t, k = np.argwhere(bad)[0]
        raise DegenerateCrossSectionError(
            f"degenerate cross-section at day index {t}, point {k + 1}: "
            "dispersion is zero or undefined (too few stocks or identical values)"
        )
    vals = returns.values / sigma[None, :, :]
    return ObservablePanel(
        kind=KIND_NORMALIZED,
        spec=returns.spec,
        symbols=returns.symbols,
        values=vals,
        included=returns.included.copy(),
        point_times_ms=returns.point_times_ms.copy(),
    )


def export_observables_csv(obs: ObservablePanel, out: TextIO) -> int:
    """Long-format dump: symbol,date,bin_index,kind,value. Returns row count."""
    out.write("symbol,date,bin_index,kind,value\n")
    idx = obs.bin_indices()
    n_rows = 0
    for s, symbol in enumerate(obs.symbols):
        for t, date in enumerate(obs.spec.dates):
            if not obs.included[s, t]:
                continue
            day = date.isoformat()
            row = obs.values[s, t]
            for k in range(obs.n_points):
                out.write(f"{symbol},{day},{idx[k]},{obs.kind},{row[k]:.12g}\n")
                n_rows += 1
    return n_rows
