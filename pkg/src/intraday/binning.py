"""Bin-price panels.

Each session is divided into windows of ``bin_seconds``; the price attached to
bin k is the last tick printed strictly before the bin's right endpoint (a tick
exactly on a limit belongs to the next window). Quiet windows carry the
previous price forward, so every panel value is a genuine tick price of that
stock-day. A stock-day with no tick before the first limit has no price to
carry and is excluded (or rejected, per policy).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import DataError, EmptyPanelError, SessionMismatchError
from .market_data import SessionSpec, TickStore
from .timeutil import format_time_of_day

logger = logging.getLogger(__name__)

POLICY_EXCLUDE = "exclude"
POLICY_ERROR = "error"


@dataclass
class PricePanel:
    """Prices on the (stock, day, bin) grid.

    ``prices[s, d, k]`` is NaN on excluded stock-days and positive elsewhere.
    ``included[s, d]`` flags stock-days that produced a full price path.
    ``bin_limits_ms`` holds the K right endpoints, strictly increasing and
    ending at the session close.
    """

    spec: SessionSpec
    symbols: tuple[str, ...]
    prices: np.ndarray  # (N, D, K) float64
    included: np.ndarray  # (N, D) bool
    bin_limits_ms: np.ndarray  # (K,) int64
    n_excluded: int = 0

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    @property
    def n_days(self) -> int:
        return self.spec.n_days

    @property
    def n_bins(self) -> int:
        return int(self.bin_limits_ms.shape[0])

    def day_view(self, day_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """Read-only (N, K) price slice for one day plus the inclusion flags."""
        if not 0 <= day_idx < self.n_days:
            raise IndexError(f"day index {day_idx} out of range 0..{self.n_days - 1}")
        out = self.prices[:, day_idx, :].view()
        out.setflags(write=False)
        flags = self.included[:, day_idx].view()
        flags.setflags(write=False)
        return out, flags

    def stock_view(self, sym_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """Read-only (D, K) price slice for one stock plus the inclusion flags."""
        if not 0 <= sym_idx < self.n_symbols:
            raise IndexError(f"stock index {sym_idx} out of range 0..{self.n_symbols - 1}")
        out = self.prices[sym_idx].view()
        out.setflags(write=False)
        flags = self.included[sym_idx].view()
        flags.setflags(write=False)
        return out, flags


def build_panel(store: TickStore, spec: SessionSpec | None = None, policy: str = POLICY_EXCLUDE) -> PricePanel:
    """Bin a tick store onto the session grid.

    Args:
        store: parsed ticks.
        spec: session grid; defaults to the store's spec. May differ from it
            only in ``bin_seconds`` (same dates and session times).
        policy: 'exclude' masks stock-days with no tick before the first
            limit; 'error' rejects the whole build instead.

    Raises:
        SessionMismatchError: spec and store disagree on dates or times.
        EmptyPanelError: every stock-day was excluded.
        DataError: policy is 'error' and some stock-day has no first-bin price.
    """
    if policy not in (POLICY_EXCLUDE, POLICY_ERROR):
        raise ValueError(f"unknown policy {policy!r}")
    if spec is None:
        spec = store.spec
    base = store.spec
    if spec.dates != base.dates or spec.open_ms != base.open_ms or spec.close_ms != base.close_ms:
        raise SessionMismatchError("session spec does not match the one the ticks were parsed with")

    limits = spec.bin_limits_ms()
    n, d, k = store.n_symbols, spec.n_days, limits.shape[0]
    prices = np.full((n, d, k), np.nan)
    included = np.zeros((n, d), dtype=bool)

    for s in range(n):
        for t in range(d):
            times, px = store.group(s, t)
            if times.shape[0] == 0:
                continue
            # index of the last tick strictly before each limit
            idx = np.searchsorted(times, limits, side="left") - 1
            if idx[0] < 0:
                continue
            prices[s, t, :] = px[idx]
            included[s, t] = True

    n_excluded = int(n * d - included.sum())
    if policy == POLICY_ERROR and n_excluded:
        bad = np.argwhere(~included)[0]
        raise DataError(
            f"{n_excluded} stock-day(s) have no tick before the first bin limit "
            f"(first: {store.symbols[bad[0]]} on {spec.dates[bad[1]].isoformat()})"
        )
    if not included.any():
        raise EmptyPanelError("empty panel: every stock-day was excluded")
    if n_excluded:
        logger.warning("excluded %d of %d stock-days with no first-bin price", n_excluded, n * d)

    return PricePanel(
        spec=spec,
        symbols=store.symbols,
        prices=prices,
        included=included,
        bin_limits_ms=limits,
        n_excluded=n_excluded,
    )


def subsample_panel(panel: PricePanel, factor: int) -> PricePanel:
    """Keep every ``factor``-th bin limit: the grid for bin_seconds * factor.

    The result must equal rebuilding the panel at the coarser width directly;
    that refinement identity is what makes bin-size sweeps comparable.
    """
    if factor < 1 or panel.n_bins % factor != 0:
        raise ValueError(f"factor {factor} does not divide {panel.n_bins} bins")
    coarse = panel.spec.with_bin_seconds(panel.spec.bin_seconds * factor)
    return PricePanel(
        spec=coarse,
        symbols=panel.symbols,
        prices=panel.prices[:, :, factor - 1 :: factor].copy(),
        included=panel.included.copy(),
        bin_limits_ms=panel.bin_limits_ms[factor - 1 :: factor].copy(),
        n_excluded=panel.n_excluded,
    )


def export_panel_csv(panel: PricePanel, out: TextIO) -> int:
    """Write the long-format panel: symbol,date,bin_index,bin_limit,price.

    Excluded stock-days are omitted (they are masked, not zero-filled), so the
    row count is (number of included stock-days) * K. Returns the row count.
    """
    out.write("symbol,date,bin_index,bin_limit,price\n")
    limit_strs = [format_time_of_day(int(ms)) for ms in panel.bin_limits_ms]
    n_rows = 0
    for s, symbol in enumerate(panel.symbols):
        for t, date in enumerate(panel.spec.dates):
            if not panel.included[s, t]:
                continue
            day = date.isoformat()
            row = panel.prices[s, t]
            for k in range(panel.n_bins):
                out.write(f"{symbol},{day},{k + 1},{limit_strs[k]},{row[k]:.12g}\n")
                n_rows += 1
    return n_rows
