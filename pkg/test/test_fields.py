import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from backend.errors import FieldError, ProfileError
from backend.fields import (
    DensityField,
    GaussianProfile,
    Grid,
    IndicatorProfile,
    KernelSpec,
    MixtureProfile,
    RingProfile,
    attraction_velocity,
    boundary_mass_fraction,
    centroid,
    discretize,
    face_gradient,
    face_gradients,
    free_space_convolve,
    gradient,
    interaction_kernel,
    kernel_components,
    mass,
    profile_from_dict,
    random_mixture,
    reflect,
    rescale_to_mass,
    scale_by,
    shift_cells,
)
from backend.utils import make_rng


class TestGrid:
    def test_spacing_and_centres(self):
        grid = Grid(d=1, half_width=8.0, n=256)
        assert grid.dx == 0.0625
        assert grid.centers[0] == pytest.approx(-8.0 + 0.03125)
        assert np.allclose(grid.centers, -grid.centers[::-1])

    def test_coordinates_are_ij_indexed(self):
        grid = Grid(d=2, half_width=1.0, n=8)
        x, y = grid.coordinates()
        assert x.shape == (8, 8)
        assert np.all(x[:, 0] == grid.centers)
        assert np.all(y[0, :] == grid.centers)

    @pytest.mark.parametrize("kwargs", [
        dict(d=3, half_width=1.0, n=16),
        dict(d=1, half_width=1.0, n=4),
        dict(d=2, half_width=0.0, n=16),
    ])
    def test_invalid_grids(self, kwargs):
        with pytest.raises(FieldError):
            Grid(**kwargs)

    def test_face_coordinates(self):
        grid = Grid(d=2, half_width=1.0, n=8)
        x, y = grid.face_coordinates(0)
        assert x.shape == (7, 8)
        assert x[0, 0] == pytest.approx(-1.0 + grid.dx)
        assert np.all(y[0, :] == grid.centers)


class TestDensityField:
    def test_rejects_negative_values(self, grid_1d):
        values = np.ones(grid_1d.shape)
        values[3] = -1e-3
        with pytest.raises(FieldError):
            DensityField(grid_1d, values)

    def test_rejects_wrong_shape(self, grid_1d):
        with pytest.raises(FieldError):
            DensityField(grid_1d, np.ones(10))

    def test_values_are_read_only_copies(self, grid_1d):
        source = np.ones(grid_1d.shape)
        field = DensityField(grid_1d, source)
        source[0] = 5.0
        assert field.values[0] == 1.0
        with pytest.raises(ValueError):
            field.values[0] = 2.0


class TestProfiles:
    def test_gaussian_mass(self, standard_gaussian_1d):
        assert mass(standard_gaussian_1d) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_mass_2d(self):
        grid = Grid(d=2, half_width=6.0, n=128)
        field = discretize(GaussianProfile(center=(0.5, -0.5), sigma=0.8, mass=2.0), grid)
        assert field.mass == pytest.approx(2.0, rel=1e-10)

    def test_indicator_density_is_mass_over_volume(self, grid_1d):
        field = discretize(IndicatorProfile(lower=(-1.0,), upper=(1.0,), mass=1.0), grid_1d)
        assert field.max_density == pytest.approx(0.5)
        assert field.mass == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("d", [1, 2])
    def test_ring_mass(self, d):
        grid = Grid(d=d, half_width=5.0, n=256 if d == 1 else 200)
        field = discretize(RingProfile(radius=1.5, width=0.3, mass=1.3), grid)
        assert field.mass == pytest.approx(1.3, rel=1e-3)

    def test_mixture_mass_adds(self, grid_1d):
        mixture = MixtureProfile(components=(
            GaussianProfile(center=(-2.0,), sigma=0.5, mass=0.3),
            GaussianProfile(center=(2.0,), sigma=0.5, mass=0.7),
        ))
        assert mixture.mass == pytest.approx(1.0)
        assert discretize(mixture, grid_1d).mass == pytest.approx(1.0, rel=1e-10)

    def test_profile_from_dict(self):
        profile = profile_from_dict({
            "kind": "mixture",
            "components": [
                {"kind": "gaussian", "center": [0.0, 1.0], "sigma": 0.5, "mass": 1.0},
                {"kind": "indicator", "lower": [-1, -1], "upper": [1, 1], "mass": 0.5},
                {"kind": "ring", "radius": 1.0, "width": 0.2, "mass": 0.25},
            ],
        })
        assert isinstance(profile, MixtureProfile)
        assert profile.mass == pytest.approx(1.75)

    def test_profile_from_dict_errors(self):
        with pytest.raises(ProfileError, match="unknown profile kind"):
            profile_from_dict({"kind": "triangle"})
        with pytest.raises(ProfileError, match="missing key"):
            profile_from_dict({"kind": "gaussian", "center": 0.0})
        with pytest.raises(ProfileError):
            profile_from_dict({"kind": "gaussian", "center": 0.0, "sigma": 1.0, "mass": -1.0})

    def test_random_mixture_is_reproducible_and_interior(self):
        grid = Grid(d=2, half_width=5.0, n=96)
        first = discretize(random_mixture(make_rng(3), grid), grid)
        second = discretize(random_mixture(make_rng(3), grid), grid)
        assert np.array_equal(first.values, second.values)
        assert boundary_mass_fraction(first) < 1e-6


class TestFieldOperations:
    def test_rescale_to_mass(self, standard_gaussian_1d):
        assert rescale_to_mass(standard_gaussian_1d, 3.0).mass == pytest.approx(3.0, rel=1e-14)
        with pytest.raises(FieldError):
            rescale_to_mass(standard_gaussian_1d, 0.0)

    def test_scale_by(self, standard_gaussian_1d):
        assert np.allclose(scale_by(standard_gaussian_1d, 2.0).values, 2.0 * standard_gaussian_1d.values)

    def test_reflect_and_centroid(self, grid_1d):
        field = discretize(GaussianProfile(center=(1.25,), sigma=0.5, mass=1.0), grid_1d)
        assert centroid(field)[0] == pytest.approx(1.25, abs=1e-10)
        assert centroid(reflect(field))[0] == pytest.approx(-1.25, abs=1e-10)

    def test_shift_cells(self, grid_1d):
        field = discretize(GaussianProfile(center=(0.0,), sigma=0.5, mass=1.0), grid_1d)
        shifted = shift_cells(field, (16,))
        assert centroid(shifted)[0] == pytest.approx(1.0, abs=1e-10)
        assert shifted.mass == pytest.approx(1.0, rel=1e-12)

    def test_boundary_mass_fraction(self, grid_1d):
        values = np.zeros(grid_1d.shape)
        values[0] = 1.0
        values[100] = 3.0
        assert boundary_mass_fraction(DensityField(grid_1d, values)) == pytest.approx(0.25)


class TestDifferences:
    def test_gradient_exact_on_linear_data(self, grid_2d):
        x, y = grid_2d.coordinates()
        field = DensityField(grid_2d, 10.0 + 0.5 * x - 0.25 * y)
        gx, gy = gradient(field).components
        assert np.allclose(gx, 0.5, atol=1e-12)
        assert np.allclose(gy, -0.25, atol=1e-12)

    def test_gradient_converges_at_second_order(self):
        errors = []
        for n in (64, 128, 256):
            grid = Grid(d=1, half_width=8.0, n=n)
            field = discretize(GaussianProfile(center=(0.0,), sigma=1.0, mass=1.0), grid)
            (gx,) = gradient(field).components
            exact = -grid.centers * field.values
            errors.append(float(np.max(np.abs(gx - exact))))
        orders = [math.log2(coarse / fine) for coarse, fine in zip(errors, errors[1:])]
        assert all(1.8 < order < 2.2 for order in orders)

    def test_face_gradients_isotropic_magnitude(self, grid_2d):
        x, y = grid_2d.coordinates()
        values = 10.0 + 0.3 * x + 0.4 * y
        for axis, component in ((0, 0.3), (1, 0.4)):
            normal, magnitude = face_gradients(values, grid_2d.dx, axis)
            assert np.allclose(normal, component, atol=1e-12)
            assert np.allclose(magnitude, 0.5, atol=1e-12)

    def test_face_gradients_1d(self, grid_1d):
        values = np.linspace(0.0, 1.0, grid_1d.n) ** 2
        normal, magnitude = face_gradients(values, grid_1d.dx, 0)
        assert normal.shape == (grid_1d.n - 1,)
        assert np.array_equal(magnitude, np.abs(normal))

    def test_face_gradient_on_each_axis(self, grid_2d):
        x, y = grid_2d.coordinates()
        values = 2.0 * x - y
        assert face_gradient(values, grid_2d.dx, 0).shape == (grid_2d.n - 1, grid_2d.n)
        assert np.allclose(face_gradient(values, grid_2d.dx, 0), 2.0, atol=1e-12)
        assert np.allclose(face_gradient(values, grid_2d.dx, 1), -1.0, atol=1e-12)


class TestConvolution:
    def test_kernel_vanishes_at_origin(self, grid_2d):
        components = kernel_components(grid_2d, KernelSpec.default_for(grid_2d, 1.0))
        center = (grid_2d.n - 1, grid_2d.n - 1)
        assert all(c[center] == 0.0 for c in components)

    def test_kernel_regularized_inside_eps(self, grid_1d):
        kernel = KernelSpec(alpha=0.5, eps=3.0 * grid_1d.dx)
        (component,) = kernel_components(grid_1d, kernel)
        offset = grid_1d.n - 1 + 1
        assert component[offset] == pytest.approx(kernel.eps ** -0.5 * grid_1d.dx)
        far = grid_1d.n - 1 + 10
        assert component[far] == pytest.approx((10 * grid_1d.dx) ** 0.5)

    def test_interaction_kernel_needs_positive_eps(self, grid_1d):
        with pytest.raises(FieldError):
            interaction_kernel(grid_1d, 0.5, 0.0)

    def test_fft_matches_direct_small(self):
        grid = Grid(d=2, half_width=5.0, n=32)
        rng = make_rng(5)
        (component, _) = kernel_components(grid, KernelSpec.default_for(grid, 1.0))
        for _ in range(5):
            values = rng.random(grid.shape)
            fast = free_space_convolve(values, component, method="fft")
            direct = free_space_convolve(values, component, method="direct")
            assert np.max(np.abs(fast - direct)) <= 1e-10 * np.max(np.abs(direct))

    @pytest.mark.slow
    def test_fft_matches_direct_on_twenty_fields(self):
        grid = Grid(d=2, half_width=5.0, n=128)
        rng = make_rng(8)
        components = kernel_components(grid, KernelSpec.default_for(grid, 1.0))
        for _ in range(20):
            field = discretize(random_mixture(rng, grid), grid)
            for component in components:
                fast = free_space_convolve(field.values, component, method="fft")
                direct = free_space_convolve(field.values, component, method="direct")
                assert np.max(np.abs(fast - direct)) <= 1e-10 * np.max(np.abs(direct))

    def test_unknown_method(self, grid_1d):
        with pytest.raises(FieldError):
            free_space_convolve(np.ones(grid_1d.shape), np.ones(2 * grid_1d.n - 1), method="spectral")

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(min_value=-3.0, max_value=3.0), b=st.floats(min_value=-3.0, max_value=3.0))
    def test_convolution_is_linear(self, a, b):
        grid = Grid(d=1, half_width=4.0, n=64)
        rng = make_rng(1)
        u, v = rng.random(grid.shape), rng.random(grid.shape)
        kernel = interaction_kernel(grid, 0.5, 2.0 * grid.dx)
        combined = free_space_convolve(a * u + b * v, kernel)
        separate = a * free_space_convolve(u, kernel) + b * free_space_convolve(v, kernel)
        assert np.allclose(combined, separate, atol=1e-10)

    def test_velocity_points_away_from_mass(self):
        grid = Grid(d=1, half_width=5.0, n=128)
        mixture = MixtureProfile(components=(
            GaussianProfile(center=(-1.5,), sigma=0.3, mass=0.5),
            GaussianProfile(center=(1.5,), sigma=0.3, mass=0.5),
        ))
        field = discretize(mixture, grid)
        (v,) = attraction_velocity(field, KernelSpec.default_for(grid, 0.5)).components
        right = np.argmin(np.abs(grid.centers - 1.5))
        assert v[right] > 0.0
        assert v[right] == pytest.approx(-v[grid.n - 1 - right], abs=1e-12)

    def test_velocity_of_symmetric_field_is_odd_2d(self, grid_2d):
        field = discretize(GaussianProfile(center=(0.0, 0.0), sigma=0.7, mass=1.0), grid_2d)
        vx, vy = attraction_velocity(field, KernelSpec.default_for(grid_2d, 1.0)).components
        assert np.allclose(vx, -vx[::-1, :], atol=1e-12)
        assert np.allclose(vy, -vy[:, ::-1], atol=1e-12)
        assert math.isfinite(float(np.abs(vx).max()))

    @pytest.mark.parametrize("grid, shift", [
        (Grid(d=1, half_width=8.0, n=256), (16,)),
        (Grid(d=2, half_width=5.0, n=64), (4, -3)),
    ])
    def test_velocity_follows_a_cell_shift(self, grid, shift):
        field = discretize(GaussianProfile(center=(0.0,) * grid.d, sigma=0.5, mass=1.0), grid)
        kernel = KernelSpec.default_for(grid, 0.5)
        moved = attraction_velocity(shift_cells(field, shift), kernel).components
        original = attraction_velocity(field, kernel).components
        # compare on the cells both fields cover
        dst = tuple(slice(s, None) if s >= 0 else slice(None, s) for s in shift)
        src = tuple(slice(None, -s) if s > 0 else slice(-s, None) for s in shift)
        for a, b in zip(moved, original):
            assert np.allclose(a[dst], b[src], rtol=0.0, atol=1e-10 * np.abs(b).max())
