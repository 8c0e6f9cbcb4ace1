"""Exception hierarchy shared by all modules."""


class NagcertError(Exception):
    """Base class for every error raised by this package."""


class InvalidProblemError(NagcertError, ValueError):
    """A problem definition violates its construction preconditions."""


class InvalidParameterError(NagcertError, ValueError):
    """A scalar parameter (step size, mu*s, tolerance, ...) is out of range."""


class MomentumSingularityError(NagcertError, ZeroDivisionError):
    """The momentum coefficient (k-1)/(k+r) would divide by zero."""

    def __init__(self, k, r):
        self.k = k
        self.r = r
        super().__init__(
            f"momentum denominator k + r vanishes at k={k} (r={r}); "
            "use a non-integer negative r or start the schedule later"
        )


class NoConvergenceError(NagcertError, RuntimeError):
    """An iterative routine hit its iteration cap before reaching tolerance."""

    def __init__(self, message, best_iterate=None, residual=None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.residual = residual


class SearchOverflowError(NagcertError, RuntimeError):
    """The threshold search ran past its defensive cap."""


class DomainError(NagcertError, ValueError):
    """A bound was evaluated outside the range where it is valid."""


class DivergenceError(NagcertError, FloatingPointError):
    """Iterates or integrator state blew up."""


class SingularTimeError(NagcertError, ValueError):
    """The ODE right-hand side was requested at t <= 0."""


class InsufficientDataError(NagcertError, ValueError):
    """Too few admissible samples for a fit or check."""


class InvalidInputError(NagcertError, ValueError):
    """A trace or record sequence is malformed (gaps, unsorted, missing columns)."""


class ConfigError(NagcertError, ValueError):
    """An experiment configuration failed to parse or validate."""
