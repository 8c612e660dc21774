"""Exception types shared across the package."""

from __future__ import annotations


class SilbathError(Exception):
    """Base class for all package errors."""


class DomainError(SilbathError, ValueError):
    """An argument lies outside the domain of an operation."""


class ResourceError(SilbathError, MemoryError):
    """A requested basis would exceed the configured size cap."""

    def __init__(self, message: str, dimension: int):
        super().__init__(message)
        self.dimension = dimension


class NumericalError(SilbathError, ArithmeticError):
    """A numerical routine failed to converge or violated an invariant."""


class StepRejected(NumericalError):
    """A propagation step drifted off the unit sphere by more than allowed."""

    def __init__(self, message: str, drift: float):
        super().__init__(message)
        self.drift = drift


class FitError(NumericalError):
    """A least-squares fit did not converge."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class RecurrenceWarning(UserWarning):
    """Propagation extends past the Poincare recurrence time of the bath."""
