"""Exception types shared across the package."""


class AvgdiffError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModelError(AvgdiffError, ValueError):
    """A model, field or payoff was built with inconsistent parameters."""


class UnsupportedModeError(AvgdiffError):
    """The requested operation is not available for the given inputs
    (for example analytic coefficient mode without finite noise support,
    or a valuation engine called with dependent noise)."""


class NumericError(AvgdiffError, ArithmeticError):
    """A computation produced a non-finite value.  The message records
    where the overflow or NaN was first observed."""


class TreeTooDeepError(AvgdiffError):
    """The exact tree engine was asked for more levels than its node
    budget allows."""


class EnumerationLimitError(AvgdiffError):
    """The stopping-time enumeration oracle was asked for an instance
    beyond its hard size cap."""


class BoundaryEscapeError(AvgdiffError):
    """A grid-engine child state fell outside the value grid.  Widen the
    grid to cover the reachable region."""
