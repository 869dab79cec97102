import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from backend.errors import ExponentWindowError
from backend.fields import (
    DensityField,
    GaussianProfile,
    Grid,
    IndicatorProfile,
    RingProfile,
    discretize,
    scale_by,
)
from backend.functionals import (
    TOL_GRID,
    aggregation_entropy_production,
    check_aggregation_bound,
    check_gns,
    check_moment_lemma,
    comparison_ratio,
    entropy,
    entropy_lower_bound_check,
    functional_report,
    interaction_energy,
    japanese_bracket,
    lq_norm,
    moment,
    nu_k,
    p_fisher,
)
from backend.regime import RegimeParams, critical_constant, validate
from backend.sharp_constants import radial_integral


def uniform_box(grid, mass=1.0):
    lower, upper = (-1.0,) * grid.d, (1.0,) * grid.d
    return discretize(IndicatorProfile(lower=lower, upper=upper, mass=mass), grid)


@pytest.fixture
def gaussian_2d():
    grid = Grid(d=2, half_width=5.0, n=40)
    return discretize(GaussianProfile(center=(0.3, -0.2), sigma=0.9, mass=1.0), grid)


class TestComparisonRatio:
    def test_positive_right_side(self):
        assert comparison_ratio(1.0, 4.0) == 0.25

    def test_zero_right_side(self):
        assert comparison_ratio(0.0, 0.0) == 0.0
        assert comparison_ratio(-1.0, 0.0) == 0.0
        assert comparison_ratio(1e-9, 0.0) == math.inf

    def test_negative_right_side_keeps_orientation(self):
        assert comparison_ratio(-3.0, -2.0) < 1.0
        assert comparison_ratio(-1.0, -2.0) > 1.0
        assert comparison_ratio(-0.5, -0.5) == 1.0


class TestEntropy:
    def test_uniform_density(self, grid_1d):
        assert entropy(uniform_box(grid_1d)) == pytest.approx(math.log(0.5), abs=1e-12)

    def test_standard_gaussian(self, standard_gaussian_1d):
        expected = -0.5 * math.log(2.0 * math.pi * math.e)
        assert entropy(standard_gaussian_1d) == pytest.approx(expected, abs=1e-6)

    def test_zero_cells_contribute_nothing(self, grid_1d):
        assert entropy(DensityField(grid_1d, np.zeros(grid_1d.shape))) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(c=st.floats(min_value=0.05, max_value=20.0))
    def test_scaling_law(self, c):
        field = discretize(GaussianProfile(center=(0.0,), sigma=1.0, mass=1.0), Grid(d=1, half_width=8.0, n=128))
        expected = c * entropy(field) + c * math.log(c) * field.mass
        assert entropy(scale_by(field, c)) == pytest.approx(expected, rel=1e-9, abs=1e-12)


class TestFisher:
    def test_gaussian_p2_equals_inverse_variance(self, standard_gaussian_1d):
        assert p_fisher(standard_gaussian_1d, 2.0) == pytest.approx(1.0, abs=2e-3)

    def test_gaussian_matches_quadrature(self, standard_gaussian_1d):
        p = 1.8

        def integrand(x):
            rho = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
            return x ** p * rho ** (p - 1.0)

        oracle = 2.0 * integrate.quad(integrand, 0.0, np.inf)[0]
        assert p_fisher(standard_gaussian_1d, p) == pytest.approx(oracle, rel=1e-2)

    def test_constant_field_has_no_information(self, grid_2d):
        field = DensityField(grid_2d, np.full(grid_2d.shape, 0.3))
        assert p_fisher(field, 1.7) == 0.0


class TestMomentsAndNorms:
    def test_zeroth_moment_is_mass(self, standard_gaussian_1d):
        assert moment(standard_gaussian_1d, 0.0) == pytest.approx(standard_gaussian_1d.mass, rel=1e-14)

    def test_first_moment_matches_quadrature(self, standard_gaussian_1d):
        def integrand(x):
            return math.sqrt(1.0 + x * x) * math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)

        oracle = integrate.quad(integrand, -np.inf, np.inf)[0]
        assert moment(standard_gaussian_1d, 1.0) == pytest.approx(oracle, abs=1e-4)

    def test_negative_moment_order(self, standard_gaussian_1d):
        with pytest.raises(ExponentWindowError):
            moment(standard_gaussian_1d, -0.5)

    def test_japanese_bracket(self):
        assert japanese_bracket((np.array([0.0, 3.0]), np.array([0.0, 4.0]))) == pytest.approx([1.0, math.sqrt(26.0)])

    @pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 4.0])
    def test_uniform_norm_1d(self, grid_1d, q):
        assert lq_norm(uniform_box(grid_1d), q) == pytest.approx(2.0 ** (1.0 / q - 1.0), rel=1e-12)

    @pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
    def test_uniform_norm_2d(self, q):
        grid = Grid(d=2, half_width=4.0, n=64)
        assert lq_norm(uniform_box(grid), q) == pytest.approx(4.0 ** (1.0 / q - 1.0), rel=1e-12)

    def test_norm_below_one_is_rejected(self, grid_1d):
        with pytest.raises(ExponentWindowError):
            lq_norm(uniform_box(grid_1d), 0.5)


class TestInteractionEnergy:
    def test_nearly_flat_kernel_gives_mass_squared(self, standard_gaussian_1d):
        assert interaction_energy(standard_gaussian_1d, 0.01) == pytest.approx(1.0, rel=2e-2)

    def test_cross_term_of_distant_bumps(self):
        grid = Grid(d=1, half_width=4.0, n=512)
        m1, m2, alpha = 0.4, 0.7, 0.5
        left = discretize(GaussianProfile(center=(-2.0,), sigma=0.1, mass=m1), grid)
        right = discretize(GaussianProfile(center=(2.0,), sigma=0.1, mass=m2), grid)
        both = DensityField(grid, left.values + right.values)
        cross = interaction_energy(both, alpha) - interaction_energy(left, alpha) - interaction_energy(right, alpha)
        assert cross == pytest.approx(2.0 * m1 * m2 * 4.0 ** (-alpha), rel=1e-2)

    def test_fft_and_direct_agree(self, gaussian_2d):
        direct = interaction_energy(gaussian_2d, 1.0, method="direct")
        fast = interaction_energy(gaussian_2d, 1.0, method="fft")
        assert fast == pytest.approx(direct, rel=1e-10)

    def test_exponent_window(self, standard_gaussian_1d):
        with pytest.raises(ExponentWindowError):
            interaction_energy(standard_gaussian_1d, 1.0)

    def test_aggregation_production(self, gaussian_2d):
        energy = interaction_energy(gaussian_2d, 0.5)
        assert aggregation_entropy_production(gaussian_2d, 0.5, 2.0) == pytest.approx(2.0 * 1.5 * energy, rel=1e-12)
        assert aggregation_entropy_production(gaussian_2d, 0.5, 0.0) == 0.0


class TestNuK:
    def test_one_dimension_unit_order(self):
        assert 2.0 * special.k1(nu_k(1, 1.0)) == pytest.approx(1.0, abs=1e-8)

    def test_two_dimensions_unit_order(self):
        nu = nu_k(2, 1.0)
        assert 2.0 * math.pi * math.exp(-nu) * (1.0 / nu + 1.0 / nu ** 2) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("d, k", [(1, 0.5), (2, 0.3), (2, 2.0)])
    def test_normalizes_the_weight(self, d, k):
        nu = nu_k(d, k)
        total = radial_integral(lambda r: math.exp(-nu * (1.0 + r * r) ** (0.5 * k)), d, max(1.0, nu ** (-1.0 / k)))
        assert total == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("k", [0.0, -1.0])
    def test_nonpositive_order(self, k):
        with pytest.raises(ExponentWindowError):
            nu_k(2, k)


class TestGNS:
    params = validate(2, 1.8, 0.5, 1.0)

    def test_q_one_is_an_identity(self, gaussian_2d):
        result = check_gns(gaussian_2d, self.params, 1.0, field_id="g")
        assert result.ratio == pytest.approx(1.0, rel=1e-14)
        assert result.passed

    def test_holds_on_gaussian(self, gaussian_2d):
        assert check_gns(gaussian_2d, self.params, 2.0).passed

    def test_q_outside_window(self, gaussian_2d):
        with pytest.raises(ExponentWindowError):
            check_gns(gaussian_2d, self.params, self.params.r + 1.0)

    @settings(max_examples=20, deadline=None)
    @given(c=st.floats(min_value=0.1, max_value=10.0))
    def test_ratio_is_invariant_under_scaling(self, c):
        grid = Grid(d=2, half_width=5.0, n=32)
        field = discretize(GaussianProfile(center=(0.0, 0.0), sigma=1.0, mass=1.0), grid)
        base = check_gns(field, self.params, 2.0).ratio
        assert check_gns(scale_by(field, c), self.params, 2.0).ratio == pytest.approx(base, rel=1e-9)


class TestMomentLemma:
    def test_constant_field(self, grid_2d):
        field = DensityField(grid_2d, np.full(grid_2d.shape, 0.1))
        params = RegimeParams(d=2, p=2.2, alpha=1.0, lam=1.0)
        result = check_moment_lemma(field, params, 0.5)
        assert result.lhs == 0.0 and result.passed

    def test_gaussian_below_two(self, gaussian_2d):
        result = check_moment_lemma(gaussian_2d, validate(2, 1.9, 0.5, 1.0), 0.5)
        assert result.passed
        assert result.details["weight_integral"] > 0.0

    def test_ring_below_two(self):
        grid = Grid(d=2, half_width=5.0, n=64)
        field = discretize(RingProfile(radius=1.5, width=0.4, mass=1.0), grid)
        assert check_moment_lemma(field, validate(2, 1.5, 0.8, 1.0), 0.4).passed

    @pytest.mark.parametrize("profile", [
        GaussianProfile(center=(0.3, -0.2), sigma=0.9, mass=1.0),
        RingProfile(radius=1.5, width=0.4, mass=1.0),
    ])
    def test_above_two_on_varying_fields(self, profile):
        grid = Grid(d=2, half_width=5.0, n=64)
        field = discretize(profile, grid)
        result = check_moment_lemma(field, RegimeParams(d=2, p=2.2, alpha=1.0, lam=1.0), 0.5)
        assert result.passed
        assert result.details["weight_integral"] is None
        assert abs(result.lhs) <= result.rhs

    @pytest.mark.parametrize("p, k", [(1.9, 1.8), (1.9, 0.0), (2.2, 1.5)])
    def test_order_window(self, gaussian_2d, p, k):
        params = RegimeParams(d=2, p=p, alpha=1.0, lam=1.0)
        with pytest.raises(ExponentWindowError):
            check_moment_lemma(gaussian_2d, params, k)


class TestEntropyBound:
    def test_uniform_box(self, grid_1d):
        result = entropy_lower_bound_check(uniform_box(grid_1d), 1.0)
        assert result.rhs == pytest.approx(math.log(0.5))
        assert result.lhs < result.rhs
        assert result.passed

    def test_extremal_density_is_tight(self):
        grid = Grid(d=1, half_width=30.0, n=2048)
        nu = nu_k(1, 1.0)
        values = np.exp(-nu * japanese_bracket(grid.coordinates()))
        result = entropy_lower_bound_check(DensityField(grid, values), 1.0)
        assert abs(result.lhs - result.rhs) <= 1e-3
        assert result.passed

    def test_empty_field(self, grid_1d):
        result = entropy_lower_bound_check(DensityField(grid_1d, np.zeros(grid_1d.n)), 0.5)
        assert (result.lhs, result.rhs) == (0.0, 0.0)
        assert result.passed


class TestAggregationBound:
    def test_fair_competition_closed_form(self, gaussian_2d):
        params = validate(2, 5.0 / 3.0, 1.0, 1.0)
        result = check_aggregation_bound(gaussian_2d, params)
        expected = (params.lam * critical_constant(2, params.p) ** (params.p - 3.0)
                    * gaussian_2d.mass ** (3.0 - params.p) * p_fisher(gaussian_2d, params.p))
        assert result.rhs == pytest.approx(expected, rel=1e-8)
        assert result.passed

    def test_holds_off_the_line(self, gaussian_2d):
        assert check_aggregation_bound(gaussian_2d, validate(2, 1.8, 0.7, 2.0)).passed


def test_functional_report(gaussian_2d):
    report = functional_report(gaussian_2d, 1.8, 0.5, alpha=1.0, qs=(1, 2))
    assert report.mass == pytest.approx(1.0, rel=1e-6)
    assert report.lq_norms[1.0] == pytest.approx(report.mass)
    assert report.header()[-2:] == ("lq_1", "lq_2")
    assert len(report.to_row()) == len(report.header())
    assert report.to_dict()["lq_norms"]["2"] == report.lq_norms[2.0]
    assert functional_report(gaussian_2d, 1.8, 0.5).interaction_energy is None
    assert TOL_GRID == 1e-3
