"""Exception types shared across the package.

Two broad families matter for the CLI exit code: bad input or an
unsupported parameter regime (exit 2) and numerical failures detected at
runtime (exit 3).
"""


class CQEDError(Exception):
    """Base class for all package errors."""


class InvalidParamsError(CQEDError, ValueError):
    """Parameter values violate a documented invariant."""


class SingularParamsError(CQEDError, ValueError):
    """Derived-quantity denominator vanishes for these parameters."""


class UnsupportedRegimeError(CQEDError, ValueError):
    """Requested operation is outside the regime the formula covers."""


class WeakDriveError(CQEDError, ValueError):
    """Drive too strong for the perturbative correlation-function paths."""


class ScopeError(CQEDError, ValueError):
    """Exact reference solver refused: system too large for its remit."""


class IntegrationFailureError(CQEDError, RuntimeError):
    """Time integration produced non-finite values or stalled."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class UndefinedCorrelationError(CQEDError, RuntimeError):
    """Steady intensity vanishes; g2 is not defined."""


class FitConvergenceError(CQEDError, RuntimeError):
    """Nonlinear fit did not converge; carries the last iterate."""

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params


class UnresolvedExtremaError(CQEDError, RuntimeError):
    """Trace-distance extrema not resolved within the refinement cap."""


class StreamFormatError(CQEDError, ValueError):
    """Click-stream file failed to parse; carries the byte offset."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset
