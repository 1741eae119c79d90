"""Exception types shared across the package."""
from __future__ import annotations


class CondiffError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CondiffError, ValueError):
    """An input value lies outside the mathematical domain of an operation."""


class GridMismatch(CondiffError, ValueError):
    """Two fields that must live on the same grid do not."""


class DimensionMismatch(CondiffError, ValueError):
    """Array dimensions are incompatible with the operation."""


class EmbeddingNotPD(CondiffError):
    """The circulant extension stayed too far from positive semidefinite.

    Raised when, even at the padding cap, the clipped negative spectral
    mass exceeds the admissible fraction: the covariance/grid combination
    cannot be sampled faithfully.
    """

    def __init__(self, message: str, clipped_fraction: float):
        super().__init__(message)
        self.clipped_fraction = clipped_fraction


class BreakdownError(CondiffError):
    """A CG curvature term p'Ap was nonpositive: the operator is not SPD."""


class ConvergenceFailure(CondiffError):
    """An iterative method hit its iteration cap before reaching tolerance.

    ``best`` carries the best iterate (or partial estimate) computed so far.
    """

    def __init__(self, message: str, *, iterations: int, residual: float, best=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.best = best


class RejectionExhausted(CondiffError):
    """The contrast rejection loop hit its attempt cap.

    Almost always means the configured bounds are unreachable at the
    configured variance.
    """

    def __init__(self, message: str, *, index: int, attempts: int):
        super().__init__(message)
        self.index = index
        self.attempts = attempts


class DegenerateTruth(CondiffError, ValueError):
    """A truth vector with zero norm makes the relative error undefined."""


class DatasetIOError(CondiffError):
    """A dataset file is missing, truncated, or has the wrong magic/version."""


class ChecksumMismatch(DatasetIOError):
    """Stored bytes do not hash to the checksum recorded in the manifest."""

    def __init__(self, message: str, *, index: int):
        super().__init__(message)
        self.index = index
