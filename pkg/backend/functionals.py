"""
Functionals Module - Lyapunov Functionals & Inequality Checks
Entropy, p-Fisher information, moments, L^q norms and interaction energy on
discrete fields, plus the inequalities of the existence argument evaluated on
concrete densities
"""

import logging
import math
from dataclasses import asdict, dataclass, field as dc_field
from functools import lru_cache
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import optimize

from backend.errors import ConstantDomainError, ExponentWindowError
from backend.fields import DensityField, face_gradients, free_space_convolve, interaction_kernel
from backend.regime import RegimeParams
from backend.sharp_constants import hls_constant, hls_exponent, radial_integral, sobolev_constant

logger = logging.getLogger(__name__)

# Relative grid tolerance of every discrete inequality check
TOL_GRID = 1e-3

# Above this many cells the interaction energy switches from the direct double sum to FFT
DIRECT_ENERGY_MAX_CELLS = 4096


@dataclass
class CheckResult:
    """One evaluated inequality lhs <= rhs."""

    field_id: str
    check: str
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    details: Dict = dc_field(default_factory=dict)

    CSV_HEADER = ("field_id", "check", "lhs", "rhs", "ratio", "pass")

    def to_row(self):
        return (self.field_id, self.check, self.lhs, self.rhs, self.ratio, self.passed)


def comparison_ratio(lhs: float, rhs: float) -> float:
    """
    lhs / rhs for a positive right side; otherwise the signed gap
    1 + (lhs - rhs) / max(|rhs|, 1), so that "<= 1 + tol" reads the same way
    """
    if rhs > 0.0:
        return lhs / rhs
    if rhs == 0.0:
        return 0.0 if lhs <= 0.0 else math.inf
    return 1.0 + (lhs - rhs) / max(abs(rhs), 1.0)


def _result(field_id: str, check: str, lhs: float, rhs: float, tol: float, **details) -> CheckResult:
    ratio = comparison_ratio(lhs, rhs)
    return CheckResult(field_id=field_id, check=check, lhs=float(lhs), rhs=float(rhs), ratio=float(ratio),
                       passed=bool(ratio <= 1.0 + tol), details=details)


def japanese_bracket(coords) -> np.ndarray:
    return np.sqrt(1.0 + sum(x * x for x in coords))


# Functionals

def entropy(field: DensityField) -> float:
    """sum rho ln rho dx^d with 0 ln 0 = 0."""
    rho = field.values
    positive = rho > 0.0
    return float(np.sum(rho[positive] * np.log(rho[positive]))) * field.grid.cell_volume


def p_fisher(field: DensityField, p: float) -> float:
    """
    I_p(rho) = (p')^p || grad rho^{1/p'} ||_p^p

    Face differences of u = rho^{1/p'}; in two dimensions the face magnitude
    uses the averaged tangential component, and each axis contributes
    |grad u|^{p-2} (D_axis u)^2.
    """
    grid = field.grid
    p_conj = p / (p - 1.0)
    u = field.values ** (1.0 / p_conj)
    total = 0.0
    for axis in range(grid.d):
        normal, magnitude = face_gradients(u, grid.dx, axis)
        if grid.d == 1:
            total += float(np.sum(magnitude ** p))
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.where(magnitude > 0.0, magnitude ** (p - 2.0), 0.0)
        total += float(np.sum(weight * normal * normal))
    return p_conj ** p * total * grid.cell_volume


def moment(field: DensityField, k: float) -> float:
    """sum rho <x>^k dx^d."""
    if k < 0.0:
        raise ExponentWindowError(f"moment order must be >= 0, got {k}")
    weight = japanese_bracket(field.grid.coordinates()) ** k
    return float(np.sum(field.values * weight)) * field.grid.cell_volume


def lq_norm(field: DensityField, q: float) -> float:
    if q < 1.0:
        raise ExponentWindowError(f"L^q norm needs q >= 1, got {q}")
    return (float(np.sum(field.values ** q)) * field.grid.cell_volume) ** (1.0 / q)


def interaction_energy(field: DensityField, alpha: float, eps: Optional[float] = None,
                       method: Optional[str] = None) -> float:
    """
    sum_i sum_j rho_i rho_j |x_i - x_j|^{-alpha} dx^{2d}

    The zero-offset pair uses eps^{-alpha} (default eps = 2 dx).

    Args:
        field: Density field
        alpha: Kernel exponent in (0, d)
        eps: Regularization radius of the self-interaction term
        method: "direct" or "fft"; chosen by cell count when omitted
    """
    grid = field.grid
    if not 0.0 < alpha < grid.d:
        raise ExponentWindowError(f"interaction exponent must lie in (0, {grid.d}), got {alpha}")
    eps = 2.0 * grid.dx if eps is None else eps
    if method is None:
        method = "direct" if field.values.size <= DIRECT_ENERGY_MAX_CELLS else "fft"
    potential = free_space_convolve(field.values, interaction_kernel(grid, alpha, eps), method=method)
    return float(np.sum(field.values * potential)) * grid.cell_volume ** 2


def aggregation_entropy_production(field: DensityField, alpha: float, lam: float,
                                   eps: Optional[float] = None) -> float:
    """lambda (d - alpha) times the interaction energy: the aggregation part of dS/dt."""
    return lam * (field.grid.d - alpha) * interaction_energy(field, alpha, eps)


@lru_cache(maxsize=None)
def nu_k(d: int, k: float) -> float:
    """
    The nu > 0 with int exp(-nu <x>^k) dx = 1 over R^d

    Raises:
        ExponentWindowError: k <= 0 (the integral then diverges for every nu)
    """
    if not k > 0.0:
        raise ExponentWindowError(f"nu_k needs k > 0, got {k}")

    def excess(nu: float) -> float:
        scale = max(1.0, (1.0 / nu) ** (1.0 / k))
        return radial_integral(lambda r: math.exp(-nu * (1.0 + r * r) ** (0.5 * k)), d, scale) - 1.0

    lo = hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
    while excess(lo) < 0.0:
        lo *= 0.5
    return float(optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=200))


# Inequality checks

def _gns_parts(params: RegimeParams, q: float):
    if params.p >= params.d:
        raise ConstantDomainError(f"GNS needs the Sobolev constant, undefined for p={params.p} >= d={params.d}")
    r = params.r
    if not 1.0 <= q <= r:
        raise ExponentWindowError(f"GNS exponent q must lie in [1, {r:g}], got {q}")
    inv_q_conj = 1.0 - 1.0 / q
    r_conj = r / (r - 1.0)
    p, p_conj = params.p, params.p_conj
    constant = sobolev_constant(params.d, p) / p_conj
    return {
        "constant": constant,
        "constant_power": r_conj * p_conj * inv_q_conj,
        "mass_power": 1.0 - r_conj * inv_q_conj,
        "fisher_power": r_conj * p_conj * inv_q_conj / p,
    }


def gns_rhs(field: DensityField, params: RegimeParams, q: float) -> float:
    """((p')^{-1} C^S)^{r'p'/q'} ||rho||_1^{1 - r'/q'} I_p^{r'p'/(q'p)}."""
    parts = _gns_parts(params, q)
    l1 = lq_norm(field, 1.0)
    fisher = p_fisher(field, params.p)
    return (parts["constant"] ** parts["constant_power"]
            * l1 ** parts["mass_power"]
            * fisher ** parts["fisher_power"])


def check_gns(field: DensityField, params: RegimeParams, q: float, field_id: str = "",
              tol: float = TOL_GRID) -> CheckResult:
    """
    Interpolation of L^q between L^1 and L^r, r = p*/p', closed by Sobolev

    Raises:
        ExponentWindowError: q outside [1, r]
        ConstantDomainError: p >= d
    """
    lhs = lq_norm(field, q)
    rhs = gns_rhs(field, params, q)
    return _result(field_id, "gns", lhs, rhs, tol, q=q)


def _moment_weight_integral(d: int, k: float, p: float) -> float:
    exponent = (k - p) / (2.0 - p)
    return radial_integral(lambda r: (1.0 + r * r) ** (0.5 * exponent), d)


def moment_flux_pairing(field: DensityField, p: float, k: float) -> float:
    """
    sum_faces |grad rho|^{p-2} D rho . grad m dx^d with m = <x>^k

    grad m = k <x>^{k-2} x is evaluated at the face coordinates.
    """
    grid = field.grid
    total = 0.0
    for axis in range(grid.d):
        normal, magnitude = face_gradients(field.values, grid.dx, axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.where(magnitude > 0.0, magnitude ** (p - 2.0), 0.0)
        coords = grid.face_coordinates(axis)
        dm = k * japanese_bracket(coords) ** (k - 2.0) * coords[axis]
        total += float(np.sum(weight * normal * dm))
    return total * grid.cell_volume


def check_moment_lemma(field: DensityField, params: RegimeParams, k: float, field_id: str = "",
                       tol: float = TOL_GRID) -> CheckResult:
    """
    Explicit-constant bound on the diffusive moment production

    p >= 2, k in [0, 1]:   lhs <= k (||rho||_{p/p'} I_p)^{1/p'}
    p < 2,  k in (0, alpha_p):
        lhs <= k (int rho m)^{1/p'} I_p^{1/p'} (int <x>^{(k-p)/(2-p)} dx)^{2/p - 1}

    Raises:
        ExponentWindowError: k outside the window for this p
    """
    p, p_conj = params.p, params.p_conj
    if p >= 2.0:
        if not 0.0 <= k <= 1.0:
            raise ExponentWindowError(f"moment order for p >= 2 must lie in [0, 1], got {k}")
    elif not 0.0 < k < params.alpha_p:
        raise ExponentWindowError(f"moment order for p < 2 must lie in (0, {params.alpha_p:g}), got {k}")

    lhs = moment_flux_pairing(field, p, k)
    fisher = p_fisher(field, p)
    if p >= 2.0:
        rhs = k * (lq_norm(field, p / p_conj) * fisher) ** (1.0 / p_conj)
        weight = None
    else:
        weight = _moment_weight_integral(field.grid.d, k, p)
        rhs = k * (moment(field, k) * fisher) ** (1.0 / p_conj) * weight ** (2.0 / p - 1.0)
    return _result(field_id, "moment", lhs, rhs, tol, k=k, weight_integral=weight)


def entropy_lower_bound_check(field: DensityField, k: float, field_id: str = "",
                              tol: float = TOL_GRID) -> CheckResult:
    """
    entropy >= M ln M - nu_k moment_k

    Reported as lhs = bound, rhs = entropy.
    """
    total = field.mass
    mass_term = total * math.log(total) if total > 0.0 else 0.0
    bound = mass_term - nu_k(field.grid.d, k) * moment(field, k)
    return _result(field_id, "entropy-bound", bound, entropy(field), tol, k=k)


def check_aggregation_bound(field: DensityField, params: RegimeParams, field_id: str = "",
                            eps: Optional[float] = None, tol: float = TOL_GRID) -> CheckResult:
    """
    HLS followed by GNS at q = 2d/(2d - alpha):

        lambda (d - alpha) E(rho) <= lambda (d - alpha) C^HLS (GNS right side at q)^2

    On the fair-competition line the right side is lambda C_{d,p}^{p-3} M^{3-p} I_p.
    """
    q = hls_exponent(params.d, params.alpha)
    factor = params.lam * (params.d - params.alpha)
    lhs = factor * interaction_energy(field, params.alpha, eps)
    rhs = factor * hls_constant(params.d, params.alpha) * gns_rhs(field, params, q) ** 2
    return _result(field_id, "aggregation", lhs, rhs, tol, q=q)


# Reports

@dataclass
class FunctionalReport:
    mass: float
    entropy: float
    p_fisher: float
    moment_k: float
    lq_norms: Dict[float, float]
    interaction_energy: Optional[float]

    CSV_HEADER = ("mass", "entropy", "p_fisher", "moment_k", "interaction_energy")

    def to_row(self):
        norms = tuple(self.lq_norms[q] for q in sorted(self.lq_norms))
        return (self.mass, self.entropy, self.p_fisher, self.moment_k, self.interaction_energy) + norms

    def header(self):
        return self.CSV_HEADER + tuple(f"lq_{q:g}" for q in sorted(self.lq_norms))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["lq_norms"] = {f"{q:g}": v for q, v in self.lq_norms.items()}
        return data


def functional_report(field: DensityField, p: float, k: float, alpha: Optional[float] = None,
                      qs: Sequence[float] = (1.0, 2.0), eps: Optional[float] = None) -> FunctionalReport:
    energy = interaction_energy(field, alpha, eps) if alpha is not None else None
    return FunctionalReport(
        mass=field.mass,
        entropy=entropy(field),
        p_fisher=p_fisher(field, p),
        moment_k=moment(field, k),
        lq_norms={float(q): lq_norm(field, q) for q in qs},
        interaction_energy=energy,
    )

