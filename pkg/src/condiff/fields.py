"""Diffusion coefficients, the contrast metric, and white-noise forcing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grf import GridSpec, RngSeed, ScalarField


@dataclass(eq=False)
class CoefficientField:
    """Positive cell-centered coefficient k = exp(phi), keeping its source field."""

    grid: GridSpec
    k_values: np.ndarray
    source_phi: ScalarField

    def as_grid(self) -> np.ndarray:
        return self.k_values.reshape(self.grid.n, self.grid.n)


@dataclass(frozen=True)
class ContrastReport:
    """exp(max phi - min phi) together with the extremes that produced it."""

    contrast: float
    phi_max: float
    phi_min: float


@dataclass(frozen=True)
class ContrastBounds:
    """Inclusive accept interval for the contrast during generation."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower >= 1.0:
            raise DomainError(f"lower contrast bound must be >= 1, got {self.lower}")
        if not self.upper > self.lower:
            raise DomainError(
                f"upper bound must exceed lower, got [{self.lower}, {self.upper}]"
            )

    @classmethod
    def for_variance(cls, variance: float) -> "ContrastBounds":
        """Canonical bounds for the four standard variance classes."""
        try:
            return CANONICAL_BOUNDS[variance]
        except KeyError:
            raise DomainError(
                f"no canonical contrast bounds for variance {variance}; "
                f"canonical values are {sorted(CANONICAL_BOUNDS)}"
            ) from None


CANONICAL_BOUNDS = {
    0.1: ContrastBounds(5.0, 15.0),
    0.4: ContrastBounds(50.0, 250.0),
    1.0: ContrastBounds(6e2, 1e3),
    2.0: ContrastBounds(8e4, 1e5),
}


def exponentiate(phi: ScalarField) -> CoefficientField:
    """Elementwise k = exp(phi); raises OverflowError if exp leaves float range."""
    with np.errstate(over="ignore"):
        k = np.exp(phi.values)
    if not np.all(np.isfinite(k)):
        raise OverflowError(
            f"exp overflowed at max(phi) = {phi.values.max():.6g}; "
            "the field is pathological for double precision"
        )
    return CoefficientField(grid=phi.grid, k_values=k, source_phi=phi)


def compute_contrast(phi: ScalarField) -> ContrastReport:
    """Exact max/min scan of the field and the exponential of its range."""
    phi_max = float(phi.values.max())
    phi_min = float(phi.values.min())
    return ContrastReport(
        contrast=float(np.exp(phi_max - phi_min)), phi_max=phi_max, phi_min=phi_min
    )


def check_bounds(report: ContrastReport, bounds: ContrastBounds) -> bool:
    """Accept iff lower <= contrast <= upper (both ends inclusive)."""
    return bounds.lower <= report.contrast <= bounds.upper


def sample_forcing(grid: GridSpec, seed: RngSeed) -> ScalarField:
    """I.i.d. standard normal value per cell; deterministic in the seed."""
    rng = seed.generator()
    return ScalarField(grid, rng.standard_normal(grid.cell_count))
