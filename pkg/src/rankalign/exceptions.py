"""Error types raised across the package."""


class AlignmentError(Exception):
    """Base class for all package errors."""


class ArgumentError(AlignmentError, ValueError):
    """Invalid user-supplied argument."""


class NumericalError(AlignmentError, ArithmeticError):
    """A computation produced non-finite or degenerate values."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class ConvergenceError(NumericalError):
    """An iterative routine hit its sweep limit; ``last`` holds the final iterate."""

    def __init__(self, message: str, last=None, iteration: int | None = None):
        super().__init__(message, iteration)
        self.last = last


class DivergenceError(NumericalError):
    """The outer linearization loop diverged; ``best`` holds the best iterate."""

    def __init__(self, message: str, best=None, iteration: int | None = None):
        super().__init__(message, iteration)
        self.best = best


class PointAtInfinityError(NumericalError):
    """A homography mapped a point to infinity."""


class DegenerateTransformError(NumericalError):
    """A transform is singular or a chain of transforms degenerated."""


class UndefinedMetricError(AlignmentError, ValueError):
    """A metric was requested on an empty support."""


class RankDeficiencyWarning(UserWarning):
    """A matrix turned out rank deficient and a min-norm fallback was used."""
