"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class RBGError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RBGError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(RBGError, ValueError):
    """Invalid model configuration (unknown baseline, bad parameters, bad M)."""


class NumericalError(RBGError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class NonConvergenceError(NumericalError):
    """An iterative procedure stopped before reaching its tolerance.

    Attributes
    ----------
    estimate : object
        Last iterate or estimate, when one is available.
    error_bound : float or None
        Last error estimate, when one is available.
    """

    def __init__(self, message, estimate=None, error_bound=None, trace=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound
        self.trace = trace


class NonFiniteError(NumericalError):
    """A function evaluation produced NaN or an infinity."""


class HazardOverflowError(NumericalError):
    """The survival function underflowed, so the hazard is not representable."""


class NonIntegrableError(NumericalError):
    """A bivariate configuration does not define a normalizable density."""


class ConditionalNonexistenceError(NumericalError):
    """A conditional shape parameter is non-positive, so the conditional law does not exist."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
