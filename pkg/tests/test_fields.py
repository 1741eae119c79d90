"""Tests for coefficient conversion, contrast, bounds, and forcing."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from condiff import (
    CANONICAL_BOUNDS,
    ContrastBounds,
    ContrastReport,
    DomainError,
    GridSpec,
    RngSeed,
    ScalarField,
    check_bounds,
    compute_contrast,
    exponentiate,
    sample_forcing,
)

GRID4 = GridSpec(4)


def field(values) -> ScalarField:
    values = np.asarray(values, dtype=float)
    n = int(np.sqrt(values.size))
    return ScalarField(GridSpec(n), values)


finite_fields = st.lists(
    st.floats(-20.0, 20.0), min_size=4, max_size=4
).map(field)


class TestExponentiate:
    def test_zero_field_gives_unit_coefficient(self):
        k = exponentiate(field(np.zeros(16)))
        assert np.all(k.k_values == 1.0)

    def test_exact_exponentials(self):
        phi = field([0.0, np.log(2.0), np.log(3.0), np.log(4.0)])
        np.testing.assert_allclose(
            exponentiate(phi).k_values, [1.0, 2.0, 3.0, 4.0], rtol=1e-15
        )

    def test_keeps_source_field(self):
        phi = field(np.linspace(-1, 1, 16))
        assert exponentiate(phi).source_phi is phi

    def test_overflow_raises(self):
        with pytest.raises(OverflowError):
            exponentiate(field([0.0, 0.0, 0.0, 1e4]))

    @given(finite_fields)
    def test_ratio_matches_contrast(self, phi):
        k = exponentiate(phi)
        report = compute_contrast(phi)
        assert k.k_values.max() / k.k_values.min() == pytest.approx(
            report.contrast, rel=1e-12
        )


class TestContrast:
    def test_constant_field(self):
        assert compute_contrast(field(np.full(16, 3.7))).contrast == 1.0

    def test_zero_field_poisson_case(self):
        assert compute_contrast(field(np.zeros(16))).contrast == 1.0

    def test_known_range(self):
        phi = field([0.0, np.log(1e5), 1.0, 2.0])
        report = compute_contrast(phi)
        assert report.contrast == pytest.approx(1e5, rel=1e-12)
        assert report.phi_max == np.log(1e5)
        assert report.phi_min == 0.0

    @given(finite_fields, st.floats(-30.0, 30.0))
    def test_shift_invariance(self, phi, shift):
        shifted = field(phi.values + shift)
        assert compute_contrast(shifted).contrast == pytest.approx(
            compute_contrast(phi).contrast, rel=1e-12
        )

    @given(finite_fields, st.floats(0.05, 2.0))
    def test_scaling_power_law(self, phi, alpha):
        scaled = field(alpha * phi.values)
        assert compute_contrast(scaled).contrast == pytest.approx(
            compute_contrast(phi).contrast ** alpha, rel=1e-9
        )


class TestBounds:
    def test_canonical_classes(self):
        assert CANONICAL_BOUNDS[0.1] == ContrastBounds(5.0, 15.0)
        assert CANONICAL_BOUNDS[0.4] == ContrastBounds(50.0, 250.0)
        assert CANONICAL_BOUNDS[1.0] == ContrastBounds(6e2, 1e3)
        assert CANONICAL_BOUNDS[2.0] == ContrastBounds(8e4, 1e5)

    def test_lookup_by_variance(self):
        assert ContrastBounds.for_variance(0.4) == ContrastBounds(50.0, 250.0)
        with pytest.raises(DomainError):
            ContrastBounds.for_variance(0.3)

    def test_accept_inside(self):
        report = ContrastReport(contrast=10.0, phi_max=1.0, phi_min=0.0)
        assert check_bounds(report, ContrastBounds(5.0, 15.0))

    def test_reject_below(self):
        report = ContrastReport(contrast=4.99, phi_max=1.0, phi_min=0.0)
        assert not check_bounds(report, ContrastBounds(5.0, 15.0))

    def test_accept_high_class(self):
        report = ContrastReport(contrast=9e4, phi_max=1.0, phi_min=0.0)
        assert check_bounds(report, ContrastBounds(8e4, 1e5))

    def test_ends_inclusive(self):
        bounds = ContrastBounds(5.0, 15.0)
        assert check_bounds(ContrastReport(5.0, 0.0, 0.0), bounds)
        assert check_bounds(ContrastReport(15.0, 0.0, 0.0), bounds)
        assert not check_bounds(ContrastReport(15.000001, 0.0, 0.0), bounds)

    def test_invalid_bounds(self):
        with pytest.raises(DomainError):
            ContrastBounds(0.5, 10.0)
        with pytest.raises(DomainError):
            ContrastBounds(10.0, 10.0)


class TestForcing:
    def test_deterministic(self):
        a = sample_forcing(GRID4, RngSeed(1, 2))
        b = sample_forcing(GRID4, RngSeed(1, 2))
        assert np.array_equal(a.values, b.values)

    def test_moments(self):
        grid = GridSpec(16)
        count = 1_000
        values = np.concatenate(
            [sample_forcing(grid, RngSeed(9, s)).values for s in range(count)]
        )
        assert values.mean() == pytest.approx(0.0, abs=0.01)
        assert values.var() == pytest.approx(1.0, abs=0.02)
