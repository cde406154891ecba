"""Exception hierarchy for cpcox.

Every error raised on purpose by this package derives from CpcoxError so
callers can catch the whole family with one clause. The CLI maps these to
exit codes (data problems -> 2, fit problems -> 3).
"""


class CpcoxError(Exception):
    """Base class for all cpcox errors."""


class DimensionMismatchError(CpcoxError, ValueError):
    """Vector or matrix dimensions disagree with the declared (p1, p2, q)."""


class InvalidArgumentError(CpcoxError, ValueError):
    """An argument violates a precondition (e.g. nonpositive bandwidth)."""


class NoEventsError(CpcoxError, ValueError):
    """A dataset contains no uncensored observation; the partial likelihood
    is vacuous."""


class InvalidStartError(CpcoxError):
    """The objective is not finite at the supplied starting point."""


class DegenerateFitError(CpcoxError):
    """The curvature matrix is singular beyond what ridge regularization is
    meant to repair (e.g. an exactly collinear or constant-zero covariate)."""


class SingularInformationError(CpcoxError):
    """The negated Hessian at the fit is not invertible; no covariance can
    be reported."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class AllStartsFailedError(CpcoxError):
    """Every multi-start attempt raised; per-start causes are attached."""

    def __init__(self, message, causes):
        super().__init__(message)
        self.causes = causes


class DataFormatError(CpcoxError, ValueError):
    """A CSV or config file is malformed; row/column context is attached."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(CpcoxError, ValueError):
    """A configuration file contains an unknown or invalid key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
