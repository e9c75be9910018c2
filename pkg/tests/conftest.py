import datetime as dt
import io

import numpy as np
import pytest

from intraday.binning import PricePanel
from intraday.market_data import SessionSpec, parse_ticks


def tick_csv(rows):
    """Build an in-memory tick CSV from (symbol, timestamp, price) tuples."""
    lines = ["symbol,timestamp,price"]
    for r in rows:
        lines.append(",".join(str(x) for x in r))
    return io.StringIO("\n".join(lines) + "\n")


def make_spec(dates=("2011-03-04",), bin_seconds=60, open_time="10:00:00",
              close_time="16:00:00", preopen_seconds=0):
    return SessionSpec.create(dates=dates, bin_seconds=bin_seconds,
                              open_time=open_time, close_time=close_time,
                              preopen_seconds=preopen_seconds)


def store_from_rows(rows, **spec_kwargs):
    return parse_ticks(tick_csv(rows), make_spec(**spec_kwargs))


def panel_from_prices(prices, bin_seconds=60, included=None):
    """Wrap an (N, D, K) price array in a panel on a synthetic session grid.

    Close time is derived from K so the grid always fits; dates count up from
    2011-03-04. Excluded stock-days must already be NaN in ``prices``.
    """
    prices = np.asarray(prices, dtype=np.float64)
    n, d, k = prices.shape
    base = dt.date(2011, 3, 4)
    dates = tuple((base + dt.timedelta(days=i)).isoformat() for i in range(d))
    close_s = 36000 + k * bin_seconds
    hh, rem = divmod(close_s, 3600)
    mm, ss = divmod(rem, 60)
    spec = SessionSpec.create(dates=dates, bin_seconds=bin_seconds,
                              open_time="10:00:00",
                              close_time=f"{hh:02d}:{mm:02d}:{ss:02d}")
    if included is None:
        included = np.ones((n, d), dtype=bool)
    else:
        included = np.asarray(included, dtype=bool)
    return PricePanel(
        spec=spec,
        symbols=tuple(f"S{i:02d}" for i in range(n)),
        prices=prices,
        included=included,
        bin_limits_ms=spec.bin_limits_ms(),
        n_excluded=int(n * d - included.sum()),
    )


@pytest.fixture
def one_hour_spec():
    # 60 one-minute bins on a single day
    return make_spec(dates=("2011-03-04",), bin_seconds=60, close_time="11:00:00")
