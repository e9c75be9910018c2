"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: DataError -> 3, NumericError -> 4.
Anything else is a bug and propagates.
"""


class IntradayError(Exception):
    """Base class for errors raised by this package."""


class DataError(IntradayError):
    """Input data is malformed, inconsistent, or insufficient."""


class ParseError(DataError):
    """A tick stream could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SessionMismatchError(DataError):
    """A store and a session spec disagree on dates or session times."""


class EmptyPanelError(DataError):
    """Every stock-day was excluded; there is nothing to analyze."""


class SampleTooSmallError(DataError):
    """Fewer than two observations where moments were requested."""


class NumericError(IntradayError):
    """A computation is undefined or failed on valid-looking input."""


class ZeroDispersionError(NumericError):
    """All values in a sample are identical; scale-dependent moments are undefined."""


class DegenerateCrossSectionError(NumericError):
    """Cross-sectional dispersion vanished where normalization needs it positive."""


class DegenerateStockError(NumericError):
    """A stock has zero time dispersion at some bin; correlations are undefined."""


class EigenConvergenceError(NumericError):
    """The rotation eigensolver did not reach tolerance in the sweep budget."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(message)
