"""Exception and warning types raised across the package."""


class RWMCVError(Exception):
    """Base class for all package errors."""


class NonConvergence(RWMCVError):
    """Adaptive quadrature exhausted its subdivision budget.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether to use them anyway.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DomainError(RWMCVError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class NotPositiveDefinite(RWMCVError, ValueError):
    """A covariance matrix failed its Cholesky factorization."""


class DegenerateDenominator(RWMCVError, ZeroDivisionError):
    """All corrected runs hit the truth exactly, so VR is undefined."""


class TooFewBatches(RWMCVError, ValueError):
    """Batch means need at least two non-empty batches."""


class EmptyA(RWMCVError):
    """No candidate c_A gives the concentration set A positive mass."""


class ConfigError(RWMCVError, ValueError):
    """Invalid experiment configuration."""


class IllConditioned(UserWarning):
    """The grid Poisson system lost more than the expected rank."""
