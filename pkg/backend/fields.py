"""
Fields Module - Grid, Density Fields & Discrete Operators
Cell-centred fields on a truncated box, face differences and the free-space
convolution with the regularized attraction kernel
"""

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, special

from backend.errors import FieldError, ProfileError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred mesh of [-L, L]^d, d in {1, 2}."""

    d: int
    half_width: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise FieldError(f"grids are one- or two-dimensional, got d={self.d}")
        if self.n < 8:
            raise FieldError(f"need at least 8 cells per axis, got n={self.n}")
        if not self.half_width > 0.0:
            raise FieldError(f"half width must be positive, got {self.half_width}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n) + 0.5) * self.dx

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        """Cell-centre coordinate arrays, one per axis, each of shape `shape`."""
        axes = [self.centers] * self.d
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(x * x for x in self.coordinates()))

    def face_coordinates(self, axis: int) -> Tuple[np.ndarray, ...]:
        """Coordinates of the n-1 interior faces normal to `axis`."""
        axes = [self.centers] * self.d
        axes[axis] = -self.half_width + np.arange(1, self.n) * self.dx
        return tuple(np.meshgrid(*axes, indexing="ij"))


@dataclass(frozen=True, eq=False)
class DensityField:
    """Nonnegative cell averages of the density on a Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise FieldError(f"values of shape {values.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise FieldError("density values must be finite")
        if np.any(values < 0.0):
            raise FieldError(f"density must be nonnegative, min={values.min():.3e}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def mass(self) -> float:
        return mass(self)

    @property
    def max_density(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class KernelSpec:
    """K^eps_alpha(x) = x/|x|^alpha outside the eps-ball, eps^{-alpha} x inside."""

    alpha: float
    eps: float

    def __post_init__(self):
        if self.eps < 0.0:
            raise FieldError(f"regularization radius must be >= 0, got {self.eps}")

    @classmethod
    def default_for(cls, grid: Grid, alpha: float) -> "KernelSpec":
        return cls(alpha=alpha, eps=2.0 * grid.dx)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    components: Tuple[np.ndarray, ...]

    def max_norm(self) -> float:
        magnitude = np.sqrt(sum(c * c for c in self.components))
        return float(magnitude.max())


# Analytic profiles

@dataclass(frozen=True)
class GaussianProfile:
    center: Tuple[float, ...]
    sigma: float
    mass: float

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ProfileError(f"profile mass must be positive, got {self.mass}")
        if self.sigma <= 0.0:
            raise ProfileError(f"sigma must be positive, got {self.sigma}")

    def density(self, coords: Tuple[np.ndarray, ...]) -> np.ndarray:
        d = len(coords)
        center = _center_for(self.center, d)
        r2 = sum((x - c) ** 2 for x, c in zip(coords, center))
        norm = self.mass / (2.0 * math.pi * self.sigma ** 2) ** (d / 2.0)
        return norm * np.exp(-0.5 * r2 / self.sigma ** 2)


@dataclass(frozen=True)
class IndicatorProfile:
    """Uniform density mass/volume on the box [lower, upper]."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    mass: float

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ProfileError(f"profile mass must be positive, got {self.mass}")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ProfileError("indicator box must have positive volume")

    def density(self, coords: Tuple[np.ndarray, ...]) -> np.ndarray:
        d = len(coords)
        lower, upper = _center_for(self.lower, d), _center_for(self.upper, d)
        volume = float(np.prod([hi - lo for lo, hi in zip(lower, upper)]))
        inside = np.ones(coords[0].shape, dtype=bool)
        for x, lo, hi in zip(coords, lower, upper):
            inside &= (x >= lo) & (x <= hi)
        return np.where(inside, self.mass / volume, 0.0)


@dataclass(frozen=True)
class RingProfile:
    """Gaussian shell exp(-(|x - c| - R)^2 / 2w^2), normalized analytically."""

    radius: float
    width: float
    mass: float
    center: Tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ProfileError(f"profile mass must be positive, got {self.mass}")
        if self.width <= 0.0 or self.radius < 0.0:
            raise ProfileError("ring needs radius >= 0 and width > 0")

    def _normalization(self, d: int) -> float:
        R, w = self.radius, self.width
        half_line = w * math.sqrt(math.pi / 2.0) * (1.0 + special.erf(R / (w * math.sqrt(2.0))))
        if d == 1:
            return 2.0 * half_line
        return 2.0 * math.pi * (w * w * math.exp(-R * R / (2.0 * w * w)) + R * half_line)

    def density(self, coords: Tuple[np.ndarray, ...]) -> np.ndarray:
        d = len(coords)
        center = _center_for(self.center, d)
        r = np.sqrt(sum((x - c) ** 2 for x, c in zip(coords, center)))
        shell = np.exp(-0.5 * (r - self.radius) ** 2 / self.width ** 2)
        return self.mass / self._normalization(d) * shell


@dataclass(frozen=True)
class MixtureProfile:
    components: Tuple = dc_field(default_factory=tuple)

    def __post_init__(self):
        if not self.components:
            raise ProfileError("mixture needs at least one component")

    @property
    def mass(self) -> float:
        return sum(c.mass for c in self.components)

    def density(self, coords: Tuple[np.ndarray, ...]) -> np.ndarray:
        total = np.zeros(coords[0].shape)
        for component in self.components:
            total = total + component.density(coords)
        return total


def _center_for(value, d: int) -> Tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * d
    value = tuple(float(v) for v in value)
    if len(value) == 1 and d > 1:
        return value * d
    if len(value) != d:
        raise ProfileError(f"expected {d} coordinates, got {len(value)}")
    return value


def profile_from_dict(spec: Dict):
    """
    Build a profile from its JSON form

    Args:
        spec: {"kind": "gaussian"|"indicator"|"ring"|"mixture", ...}

    Returns:
        Profile object
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "gaussian":
            return GaussianProfile(center=tuple(np.atleast_1d(spec["center"])), sigma=float(spec["sigma"]),
                                   mass=float(spec["mass"]))
        if kind == "indicator":
            return IndicatorProfile(lower=tuple(np.atleast_1d(spec["lower"])), upper=tuple(np.atleast_1d(spec["upper"])),
                                    mass=float(spec["mass"]))
        if kind == "ring":
            return RingProfile(radius=float(spec["radius"]), width=float(spec["width"]), mass=float(spec["mass"]),
                               center=tuple(np.atleast_1d(spec.get("center", 0.0))))
        if kind == "mixture":
            return MixtureProfile(components=tuple(profile_from_dict(c) for c in spec["components"]))
    except KeyError as e:
        raise ProfileError(f"profile '{kind}' is missing key {e}") from e
    raise ProfileError(f"unknown profile kind {kind!r}")


def random_mixture(rng: np.random.Generator, grid: Grid, n_components: Optional[int] = None) -> MixtureProfile:
    """Gaussian mixture whose components stay well inside the box."""
    if n_components is None:
        n_components = int(rng.integers(1, 4))
    L = grid.half_width
    components = []
    for _ in range(n_components):
        sigma = float(rng.uniform(0.07 * L, 0.12 * L))
        reach = max(L - 6.5 * sigma, 0.0)
        center = tuple(float(c) for c in rng.uniform(-reach, reach, size=grid.d))
        components.append(GaussianProfile(center=center, sigma=sigma, mass=float(rng.uniform(0.2, 1.0))))
    return MixtureProfile(components=tuple(components))


# Field construction and elementary operations

def discretize(profile, grid: Grid) -> DensityField:
    """Cell averages of an analytic profile by the midpoint rule."""
    if profile.mass <= 0.0:
        raise ProfileError(f"profile mass must be positive, got {profile.mass}")
    values = profile.density(grid.coordinates())
    return DensityField(grid, np.maximum(values, 0.0))


def mass(field: DensityField) -> float:
    return float(np.sum(field.values)) * field.grid.cell_volume


def scale_by(field: DensityField, c: float) -> DensityField:
    return DensityField(field.grid, c * field.values)


def rescale_to_mass(field: DensityField, target: float) -> DensityField:
    current = mass(field)
    if current <= 0.0:
        raise FieldError("cannot rescale a field of zero mass")
    if target <= 0.0:
        raise FieldError(f"target mass must be positive, got {target}")
    return scale_by(field, target / current)


def reflect(field: DensityField) -> DensityField:
    """rho(x) -> rho(-x)."""
    return DensityField(field.grid, field.values[(slice(None, None, -1),) * field.grid.d])


def shift_cells(field: DensityField, shift: Sequence[int]) -> DensityField:
    """Translate by whole cells; mass pushed past the box edge is dropped, vacated cells are zero."""
    values = field.values
    out = np.zeros_like(values)
    src, dst = [], []
    for s, n in zip(shift, values.shape):
        if s >= 0:
            src.append(slice(0, n - s))
            dst.append(slice(s, n))
        else:
            src.append(slice(-s, n))
            dst.append(slice(0, n + s))
    out[tuple(dst)] = values[tuple(src)]
    return DensityField(field.grid, out)


def centroid(field: DensityField) -> Tuple[float, ...]:
    total = float(np.sum(field.values))
    return tuple(float(np.sum(x * field.values)) / total for x in field.grid.coordinates())


def boundary_mass_fraction(field: DensityField) -> float:
    """Share of the mass sitting in the outermost layer of cells."""
    interior = field.values[(slice(1, -1),) * field.grid.d]
    total = float(np.sum(field.values))
    if total == 0.0:
        return 0.0
    return (total - float(np.sum(interior))) / total


# Differences

def gradient(field: DensityField) -> VectorField:
    """
    Cell-centred gradient

    Second-order central differences in the interior, second-order one-sided
    differences on the boundary cells (exact on linear data).
    """
    dx = field.grid.dx
    components = tuple(np.gradient(field.values, dx, axis=a, edge_order=2) for a in range(field.grid.d))
    return VectorField(field.grid, components)


def face_gradient(values: np.ndarray, dx: float, axis: int) -> np.ndarray:
    """Normal differences at the n-1 interior faces along `axis`."""
    return np.diff(values, axis=axis) / dx


def face_gradients(values: np.ndarray, dx: float, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Normal component and full magnitude of the gradient on faces normal to `axis`

    In two dimensions the tangential component is the face average of the
    cell-centred central differences, so |grad| is isotropic.

    Returns:
        (normal, magnitude), both with n-1 entries along `axis`
    """
    normal = face_gradient(values, dx, axis)
    if values.ndim == 1:
        return normal, np.abs(normal)
    tangent_axis = 1 - axis
    tangential = np.gradient(values, dx, axis=tangent_axis, edge_order=2)
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis], hi[axis] = slice(None, -1), slice(1, None)
    tangential = 0.5 * (tangential[tuple(lo)] + tangential[tuple(hi)])
    return normal, np.sqrt(normal * normal + tangential * tangential)


# Free-space convolution

def offset_lattice(grid: Grid) -> Tuple[np.ndarray, ...]:
    """Offsets m*dx, m in [-(n-1), n-1], on every axis."""
    m = np.arange(-(grid.n - 1), grid.n) * grid.dx
    return tuple(np.meshgrid(*([m] * grid.d), indexing="ij"))


def kernel_components(grid: Grid, kernel: KernelSpec) -> Tuple[np.ndarray, ...]:
    """K^eps_alpha sampled on the offset lattice; zero at the origin."""
    offsets = offset_lattice(grid)
    r = np.sqrt(sum(o * o for o in offsets))
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(r >= kernel.eps, r ** (-kernel.alpha), 0.0)
    if kernel.eps > 0.0:
        weight = np.where(r < kernel.eps, kernel.eps ** (-kernel.alpha), weight)
    weight = np.where(r == 0.0, 0.0, weight)
    return tuple(o * weight for o in offsets)


def interaction_kernel(grid: Grid, alpha: float, eps: float) -> np.ndarray:
    """|x - y|^{-alpha} on the offset lattice, the zero offset replaced by eps^{-alpha}."""
    if not eps > 0.0:
        raise FieldError("interaction energy needs a positive regularization radius")
    r = np.sqrt(sum(o * o for o in offset_lattice(grid)))
    with np.errstate(divide="ignore"):
        weight = r ** (-alpha)
    weight[r == 0.0] = eps ** (-alpha)
    return weight


def free_space_convolve(values: np.ndarray, kernel: np.ndarray, method: str = "fft",
                        workers: Optional[int] = None) -> np.ndarray:
    """
    out[i] = sum_j kernel[i - j + n - 1] values[j] without periodic wraparound

    Args:
        values: Array of shape (n,)*d
        kernel: Array of shape (2n-1,)*d indexed by offset + n - 1
        method: "fft" (zero-padded spectral product) or "direct" (shift-and-add
            over every offset in a fixed order)
        workers: scipy.fft worker count; defaults to the calling thread's
            scipy.fft.set_workers setting

    Returns:
        Array of shape (n,)*d
    """
    n = values.shape[0]
    d = values.ndim
    if method == "direct":
        return _direct_convolve(values, kernel)
    if method != "fft":
        raise FieldError(f"unknown convolution method {method!r}")
    workers = workers or fft.get_workers()
    padded = tuple(fft.next_fast_len(3 * n - 2, real=True) for _ in range(d))
    spectrum = fft.rfftn(values, s=padded, workers=workers) * fft.rfftn(kernel, s=padded, workers=workers)
    full = fft.irfftn(spectrum, s=padded, workers=workers)
    return np.ascontiguousarray(full[(slice(n - 1, 2 * n - 1),) * d])


def _direct_convolve(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    out = np.zeros_like(values, dtype=np.float64)
    for index in np.ndindex(*kernel.shape):
        weight = kernel[index]
        if weight == 0.0:
            continue
        dst, src = [], []
        for m in index:
            s = m - (n - 1)
            dst.append(slice(max(0, s), min(n, n + s)))
            src.append(slice(max(0, -s), min(n, n - s)))
        out[tuple(dst)] += weight * values[tuple(src)]
    return out


def attraction_velocity(field: DensityField, kernel: KernelSpec, method: str = "fft",
                        workers: Optional[int] = None) -> VectorField:
    """
    v = K^eps_alpha * rho evaluated at the cell centres

    v points away from the mass; the aggregation term transports the density
    with velocity -lambda v.
    """
    grid = field.grid
    components = tuple(
        grid.cell_volume * free_space_convolve(field.values, k, method=method, workers=workers)
        for k in kernel_components(grid, kernel)
    )
    return VectorField(grid, components)
