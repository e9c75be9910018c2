"""Tick ingestion and session bookkeeping.

The interchange format is a CSV stream with header ``symbol,timestamp,price``.
Timestamps are either session-local ISO strings ``YYYY-MM-DDTHH:MM:SS.mmm`` or
integer epoch milliseconds; epoch values are split into (date, time of day) by
straight divmod on the same local clock, no timezone arithmetic anywhere.

Parsing is columnar (pandas) for throughput, but the error surface stays
row-oriented: malformed input raises :class:`ParseError` naming the first
offending physical line.
"""

from __future__ import annotations

import datetime as dt
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, TextIO, Union

import numpy as np
import pandas as pd

from .errors import DataError, ParseError
from .timeutil import (
    MS_PER_DAY,
    date_to_epoch_days,
    epoch_days_to_date,
    format_time_of_day,
    parse_date,
    parse_time_of_day,
)

logger = logging.getLogger(__name__)

TICK_HEADER = ("symbol", "timestamp", "price")
_ISO_FORMAT = "%Y-%m-%dT%H:%M:%S.%f"

Source = Union[str, Path, TextIO]


@dataclass(frozen=True)
class TickRecord:
    """One trade print on the session-local clock."""

    symbol: str
    date: dt.date
    time_ms: int  # ms since midnight
    price: float

    def timestamp(self) -> str:
        return f"{self.date.isoformat()}T{format_time_of_day(self.time_ms, with_millis=True)}"


@dataclass(frozen=True)
class SessionSpec:
    """Immutable description of the trading session grid.

    The session [open, close] is divided into ``n_bins`` windows of
    ``bin_seconds`` each; the close must sit exactly on the grid. Ticks at
    the open and at the close are in-session. A configurable pre-open margin
    lets early prints serve as carry-forward sources for the first bin.
    """

    open_ms: int
    close_ms: int
    dates: tuple[dt.date, ...]
    bin_seconds: int
    preopen_seconds: int = 0

    def __post_init__(self):
        if self.close_ms <= self.open_ms:
            raise ValueError("session close must be after open")
        if self.bin_seconds <= 0:
            raise ValueError("bin_seconds must be positive")
        span_ms = self.close_ms - self.open_ms
        if span_ms % (self.bin_seconds * 1000) != 0:
            raise ValueError(
                f"session length {span_ms / 1000:.0f}s is not a multiple of bin_seconds={self.bin_seconds}"
            )
        if span_ms // (self.bin_seconds * 1000) < 2:
            raise ValueError("session must contain at least two bins")
        if len(self.dates) < 1:
            raise ValueError("at least one trading date required")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if self.preopen_seconds < 0:
            raise ValueError("preopen_seconds must be >= 0")

    @classmethod
    def create(
        cls,
        dates,
        bin_seconds: int,
        open_time: str = "10:00:00",
        close_time: str = "16:00:00",
        preopen_seconds: int = 0,
    ) -> "SessionSpec":
        """Build a spec from human-readable times and ISO date strings."""
        parsed = tuple(d if isinstance(d, dt.date) else parse_date(d) for d in dates)
        return cls(
            open_ms=parse_time_of_day(open_time),
            close_ms=parse_time_of_day(close_time),
            dates=parsed,
            bin_seconds=int(bin_seconds),
            preopen_seconds=int(preopen_seconds),
        )

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_bins(self) -> int:
        return (self.close_ms - self.open_ms) // (self.bin_seconds * 1000)

    @property
    def session_seconds(self) -> int:
        return (self.close_ms - self.open_ms) // 1000

    def bin_limits_ms(self) -> np.ndarray:
        """Right endpoints of the bins: open + k*T for k = 1..n_bins, last one at the close."""
        step = self.bin_seconds * 1000
        return self.open_ms + step * np.arange(1, self.n_bins + 1, dtype=np.int64)

    def with_bin_seconds(self, bin_seconds: int) -> "SessionSpec":
        return SessionSpec(
            open_ms=self.open_ms,
            close_ms=self.close_ms,
            dates=self.dates,
            bin_seconds=int(bin_seconds),
            preopen_seconds=self.preopen_seconds,
        )

    def date_strings(self) -> list[str]:
        return [d.isoformat() for d in self.dates]


class TickStore:
    """Per (symbol, date) time-sorted tick columns.

    Backed by flat arrays sorted by (symbol, date, time) with a stable sort,
    so simultaneous prints keep their input order and duplicates survive.
    The universe is the lexicographically sorted set of observed symbols.
    """

    def __init__(
        self,
        spec: SessionSpec,
        symbols: tuple[str, ...],
        times_ms: np.ndarray,
        prices: np.ndarray,
        starts: np.ndarray,
        ends: np.ndarray,
        dropped: dict[str, int],
    ):
        self.spec = spec
        self.symbols = symbols
        self.dates = spec.dates
        self._times = times_ms
        self._prices = prices
        self._starts = starts  # (N, D) row-range start into the flat arrays
        self._ends = ends
        self.dropped = dict(dropped)
        for arr in (self._times, self._prices, self._starts, self._ends):
            arr.setflags(write=False)

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_ticks(self) -> int:
        return int(self._times.shape[0])

    def symbol_index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise KeyError(f"unknown symbol {symbol!r}") from None

    def group(self, sym_idx: int, day_idx: int) -> tuple[np.ndarray, np.ndarray]:
        """Read-only (times_ms, prices) views for one stock-day, time sorted."""
        lo = self._starts[sym_idx, day_idx]
        hi = self._ends[sym_idx, day_idx]
        return self._times[lo:hi], self._prices[lo:hi]

    def counts(self) -> np.ndarray:
        """Tick counts per (symbol, date), shape (N, D)."""
        return (self._ends - self._starts).astype(np.int64)

    def iter_records(self) -> Iterator[TickRecord]:
        for s, symbol in enumerate(self.symbols):
            for d, date in enumerate(self.dates):
                times, prices = self.group(s, d)
                for t, p in zip(times.tolist(), prices.tolist()):
                    yield TickRecord(symbol, date, t, p)

    def to_frame(self) -> pd.DataFrame:
        """Round-trip view in the interchange column layout."""
        rows = [(r.symbol, r.timestamp(), r.price) for r in self.iter_records()]
        return pd.DataFrame(rows, columns=list(TICK_HEADER))


def _open_source(source: Source):
    if isinstance(source, (str, Path)):
        return open(source, "r", newline=""), True
    return source, False


def read_tick_frame(source: Source) -> tuple[pd.DataFrame, str]:
    """Read the raw tick CSV into columns symbol/day_epoch/time_ms/price.

    Returns the frame plus the detected timestamp kind ('iso' or 'epoch_ms').
    Raises ParseError / DataError on malformed input; errors reference
    1-based physical line numbers (header is line 1).
    """
    handle, owned = _open_source(source)
    try:
        text_head = handle.readline()
        header = [c.strip() for c in text_head.rstrip("\r\n").split(",")]
        if text_head == "":
            raise DataError("empty tick input")
        if header != list(TICK_HEADER):
            raise ParseError(
                f"expected header {','.join(TICK_HEADER)!r}, got {text_head.rstrip()!r}", line=1
            )
        try:
            frame = pd.read_csv(
                handle,
                header=None,
                names=list(TICK_HEADER),
                dtype={"price": np.float64},
                skip_blank_lines=False,
            )
        except pd.errors.EmptyDataError:
            raise DataError("tick input has a header but no rows") from None
        except (ValueError, pd.errors.ParserError):
            # Slow diagnostic pass: find the first offending line. The fast
            # path reads from line 2 onward, so reported row i maps to
            # physical line i + 1 for tokenizer errors and i + 2 for frames.
            handle.seek(0)
            handle.readline()
            try:
                diag = pd.read_csv(
                    handle, header=None, names=list(TICK_HEADER), dtype=str, skip_blank_lines=False
                )
            except pd.errors.ParserError as tok:
                match = re.search(r"line (\d+)", str(tok))
                line = int(match.group(1)) + 1 if match else None
                raise ParseError("malformed row (wrong field count)", line=line) from None
            price_num = pd.to_numeric(diag["price"], errors="coerce")
            bad = np.flatnonzero(price_num.isna().to_numpy() | diag["price"].isna().to_numpy())
            line = int(bad[0]) + 2 if bad.size else 2
            raise ParseError("malformed row (bad price field)", line=line) from None
    finally:
        if owned:
            handle.close()

    if len(frame) == 0:
        raise DataError("tick input has a header but no rows")

    sym = frame["symbol"]
    if sym.isna().any():
        line = int(np.flatnonzero(sym.isna().to_numpy())[0]) + 2
        raise ParseError("malformed row (missing symbol)", line=line)

    price = frame["price"].to_numpy()
    if np.isnan(price).any():
        line = int(np.flatnonzero(np.isnan(price))[0]) + 2
        raise ParseError("malformed row (missing or non-numeric price)", line=line)
    if (price <= 0).any():
        line = int(np.flatnonzero(price <= 0)[0]) + 2
        raise ParseError(f"price must be positive, got {price[(price <= 0)][0]!r}", line=line)

    ts = frame["timestamp"]
    if pd.api.types.is_integer_dtype(ts):
        kind = "epoch_ms"
        epoch = ts.to_numpy(dtype=np.int64)
    elif pd.api.types.is_float_dtype(ts):
        vals = ts.to_numpy()
        bad = ~np.isfinite(vals) | (vals != np.floor(vals))
        if bad.any():
            line = int(np.flatnonzero(bad)[0]) + 2
            raise ParseError("malformed row (bad timestamp)", line=line)
        kind = "epoch_ms"
        epoch = vals.astype(np.int64)
    else:
        kind = "iso"
        parsed = pd.to_datetime(ts, format=_ISO_FORMAT, errors="coerce")
        if parsed.isna().any():
            line = int(np.flatnonzero(parsed.isna().to_numpy())[0]) + 2
            raise ParseError(
                "malformed row (timestamp must be YYYY-MM-DDTHH:MM:SS.mmm or epoch ms)", line=line
            )
        epoch = parsed.to_numpy().astype("datetime64[ms]").astype(np.int64)

    day_epoch = epoch // MS_PER_DAY
    time_ms = epoch - day_epoch * MS_PER_DAY
    out = pd.DataFrame(
        {
            "symbol": sym.astype(str),
            "day_epoch": day_epoch,
            "time_ms": time_ms,
            "price": price,
        }
    )
    return out, kind


def build_store(frame: pd.DataFrame, spec: SessionSpec) -> TickStore:
    """Filter a raw tick frame to the session windows and index it per stock-day."""
    day_keys = np.array([date_to_epoch_days(d) for d in spec.dates], dtype=np.int64)
    day_epoch = frame["day_epoch"].to_numpy(dtype=np.int64)
    time_ms = frame["time_ms"].to_numpy(dtype=np.int64)

    pos = np.searchsorted(day_keys, day_epoch)
    pos_clipped = np.minimum(pos, len(day_keys) - 1)
    on_date = day_keys[pos_clipped] == day_epoch
    lo = spec.open_ms - spec.preopen_seconds * 1000
    in_window = (time_ms >= lo) & (time_ms <= spec.close_ms)

    keep = on_date & in_window
    dropped = {
        "unlisted_date": int((~on_date).sum()),
        "session_window": int((on_date & ~in_window).sum()),
    }
    total_dropped = dropped["unlisted_date"] + dropped["session_window"]
    if total_dropped:
        logger.warning(
            "dropped %d out-of-session ticks (%d off-date, %d outside window)",
            total_dropped,
            dropped["unlisted_date"],
            dropped["session_window"],
        )
    if not keep.any():
        raise DataError("no ticks fall inside the session windows")

    symbols_kept = frame["symbol"].to_numpy()[keep]
    sym_codes, uniques = pd.factorize(symbols_kept, sort=True)
    symbols = tuple(str(s) for s in uniques)
    day_codes = pos_clipped[keep]
    t_kept = time_ms[keep]
    p_kept = frame["price"].to_numpy()[keep]

    n_days = len(day_keys)
    order = np.lexsort((t_kept, day_codes, sym_codes))  # stable: ties keep input order
    sym_sorted = sym_codes[order]
    day_sorted = day_codes[order]
    combined = sym_sorted.astype(np.int64) * n_days + day_sorted
    cells = np.arange(len(symbols) * n_days, dtype=np.int64)
    starts = np.searchsorted(combined, cells, side="left").reshape(len(symbols), n_days)
    ends = np.searchsorted(combined, cells, side="right").reshape(len(symbols), n_days)

    return TickStore(
        spec=spec,
        symbols=symbols,
        times_ms=t_kept[order],
        prices=p_kept[order],
        starts=starts,
        ends=ends,
        dropped=dropped,
    )


def parse_ticks(source: Source, spec: SessionSpec) -> TickStore:
    """Parse a tick CSV stream into a :class:`TickStore` for the given session."""
    frame, _ = read_tick_frame(source)
    return build_store(frame, spec)


def observed_dates(frame: pd.DataFrame) -> tuple[dt.date, ...]:
    """Distinct dates present in a raw tick frame, ascending."""
    days = np.unique(frame["day_epoch"].to_numpy())
    return tuple(epoch_days_to_date(d) for d in days)


def coverage_report(store: TickStore) -> pd.DataFrame:
    """Tick counts and first/last print times per (symbol, date).

    Zero-count cells keep empty first/last fields; the row order is the
    (symbol, date) grid order, so the table is deterministic.
    """
    counts = store.counts()
    rows = []
    for s, symbol in enumerate(store.symbols):
        for d, date in enumerate(store.dates):
            times, _ = store.group(s, d)
            if times.shape[0]:
                first = format_time_of_day(int(times[0]), with_millis=True)
                last = format_time_of_day(int(times[-1]), with_millis=True)
            else:
                first = ""
                last = ""
            rows.append((symbol, date.isoformat(), int(counts[s, d]), first, last))
    return pd.DataFrame(rows, columns=["symbol", "date", "tick_count", "first_time", "last_time"])


def ticks_to_csv(records, out: TextIO) -> int:
    """Write TickRecords in the interchange layout. Returns the row count."""
    out.write(",".join(TICK_HEADER) + "\n")
    n = 0
    for r in records:
        out.write(f"{r.symbol},{r.timestamp()},{r.price}\n")
        n += 1
    return n
