"""Intraday seasonality analytics for tick data.

The pipeline: parse ticks, bin prices on a fixed session grid, form returns
and relative prices, estimate robust cross-sectional moments and their
seasonal averages, and study equal-time correlation spectra across bin sizes.

Only the numpy/pandas layers import here. The eigensolver (numba) lives in
``intraday.spectrum`` and the figure rendering (matplotlib) in
``intraday.report``; import those modules directly when needed.
"""

__version__ = "0.1.0"

from .binning import POLICY_ERROR, POLICY_EXCLUDE, PricePanel, build_panel
from .errors import (
    DataError,
    IntradayError,
    NumericError,
    ParseError,
    SampleTooSmallError,
)
from .market_data import (
    SessionSpec,
    TickStore,
    build_store,
    coverage_report,
    observed_dates,
    parse_ticks,
    read_tick_frame,
)
from .moments import (
    cross_section_moments,
    robust_moments,
    single_stock_moments,
    stock_average,
    time_average,
    volatility_proxies,
)
from .observables import (
    KIND_NORMALIZED,
    KIND_RELATIVE,
    KIND_RETURNS,
    compute_relative_prices,
    compute_returns,
    normalize_returns,
)

__all__ = [
    "__version__",
    "POLICY_ERROR",
    "POLICY_EXCLUDE",
    "PricePanel",
    "build_panel",
    "DataError",
    "IntradayError",
    "NumericError",
    "ParseError",
    "SampleTooSmallError",
    "SessionSpec",
    "TickStore",
    "build_store",
    "coverage_report",
    "observed_dates",
    "parse_ticks",
    "read_tick_frame",
    "cross_section_moments",
    "robust_moments",
    "single_stock_moments",
    "stock_average",
    "time_average",
    "volatility_proxies",
    "KIND_NORMALIZED",
    "KIND_RELATIVE",
    "KIND_RETURNS",
    "compute_relative_prices",
    "compute_returns",
    "normalize_returns",
]
