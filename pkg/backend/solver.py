"""
Solver Module - Conservative Finite-Volume Integrator
Explicit upwind/central scheme for p-Laplacian diffusion with nonlocal
attraction, diagnostics along the run and blow-up indicators
"""

import logging
import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import xlogy

from backend.errors import ConfigError, NonPositivityViolation
from backend.fields import (
    DensityField,
    Grid,
    KernelSpec,
    VectorField,
    attraction_velocity,
    boundary_mass_fraction,
    face_gradients,
    free_space_convolve,
    kernel_components,
)
from backend.functionals import aggregation_entropy_production, entropy, interaction_energy, moment, p_fisher
from backend.regime import RegimeParams, k_window
from backend.reporting import write_csv
from backend.utils import config_hash

logger = logging.getLogger(__name__)

NEGATIVITY_RTOL = 1e-13
BOUNDARY_MASS_LIMIT = 1e-6
DELTA_SCALE = 1e-8

# Residuals on steps truncated below this share of the CFL step are not reported
RESIDUAL_MIN_STEP_SHARE = 1e-3


class TerminalStatus(str, Enum):
    REACHED_T_END = "ReachedTEnd"
    BLOW_UP = "BlowUpIndicator"
    DT_COLLAPSE = "DtCollapse"


@dataclass(frozen=True)
class SolverConfig:
    """
    Everything a run needs besides the initial density

    delta=None selects 1e-8 * max(rho_0) / dx for p < 2 and 0 otherwise;
    moment_k=None selects the midpoint of the admissible moment window.
    """

    params: RegimeParams
    grid: Grid
    kernel: KernelSpec
    t_end: float
    cfl: float = 0.45
    delta: Optional[float] = None
    dt_min: float = 1e-14
    rho_max: float = 1e6
    diag_every: int = 10
    dt_cap: float = 1e-2
    moment_k: Optional[float] = None
    convolution: str = "fft"
    snapshot_times: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.grid.d != self.params.d:
            raise ConfigError(f"grid dimension {self.grid.d} does not match d={self.params.d}")
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.t_end > 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if not self.dt_min > 0.0:
            raise ConfigError(f"dt_min must be positive, got {self.dt_min}")
        if not self.dt_cap > 0.0:
            raise ConfigError(f"dt_cap must be positive, got {self.dt_cap}")
        if self.diag_every < 1:
            raise ConfigError(f"diag_every must be >= 1, got {self.diag_every}")
        if self.delta is not None and self.delta < 0.0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.convolution not in ("fft", "direct"):
            raise ConfigError(f"convolution must be 'fft' or 'direct', got {self.convolution!r}")
        if any(not 0.0 < t <= self.t_end for t in self.snapshot_times):
            raise ConfigError("snapshot times must lie in (0, t_end]")
        if self.moment_k is not None and self.moment_k < 0.0:
            raise ConfigError(f"moment_k must be >= 0, got {self.moment_k}")

    @property
    def resolved_moment_k(self) -> float:
        if self.moment_k is not None:
            return self.moment_k
        lo, hi = k_window(self.params)
        return 0.5 * (lo + hi) if lo < hi else 0.5

    def to_dict(self) -> Dict:
        return {
            "params": self.params.to_dict(),
            "grid": {"d": self.grid.d, "half_width": self.grid.half_width, "n": self.grid.n},
            "kernel": {"alpha": self.kernel.alpha, "eps": self.kernel.eps},
            "t_end": self.t_end,
            "cfl": self.cfl,
            "delta": self.delta,
            "dt_min": self.dt_min,
            "rho_max": self.rho_max,
            "diag_every": self.diag_every,
            "dt_cap": self.dt_cap,
            "moment_k": self.resolved_moment_k,
            "convolution": self.convolution,
            "snapshot_times": list(self.snapshot_times),
        }


@dataclass
class StepDiagnostics:
    t: float
    dt: float
    mass: float
    min_density: float
    max_density: float
    entropy: float
    p_fisher: float
    moment_k: float
    interaction_energy: float
    entropy_dissipation_residual: float
    scheme_residual: float

    def to_row(self) -> Tuple:
        return (self.t, self.dt, self.mass, self.min_density, self.max_density, self.entropy,
                self.p_fisher, self.moment_k, self.interaction_energy, self.entropy_dissipation_residual,
                self.scheme_residual)


TRAJECTORY_HEADER = ("t", "dt", "mass", "min", "max", "entropy", "p_fisher", "moment_k", "interaction",
                     "residual", "scheme_residual", "status")


@dataclass
class Trajectory:
    config: SolverConfig
    rows: List[StepDiagnostics]
    status: TerminalStatus
    status_time: float
    delta: float
    steps: int = 0
    boundary_flagged: bool = False
    final: Optional[DensityField] = None
    snapshots: Dict[float, DensityField] = dc_field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([row.t for row in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    def to_csv(self, path: str) -> str:
        """Diagnostics stream; intermediate rows carry status Running, the last row the terminal status."""
        last = len(self.rows) - 1
        rows = (row.to_row() + (self.status.value if i == last else "Running",) for i, row in enumerate(self.rows))
        return write_csv(path, TRAJECTORY_HEADER, rows, config_hash(self.config.to_dict()))


# Fluxes

def phi_delta(magnitude: np.ndarray, p: float, delta: float) -> np.ndarray:
    """(s^2 + delta^2)^{(p-2)/2}; zero where s = delta = 0 and p < 2 (the flux vanishes there)."""
    base = magnitude * magnitude + delta * delta
    if p >= 2.0:
        return base ** (0.5 * (p - 2.0))
    with np.errstate(divide="ignore"):
        return np.where(base > 0.0, base ** (0.5 * (p - 2.0)), 0.0)


def _diffusive_flux(values: np.ndarray, dx: float, p: float, delta: float) -> Tuple[Tuple[np.ndarray, ...], float]:
    fluxes, phi_max = [], 0.0
    for axis in range(values.ndim):
        normal, magnitude = face_gradients(values, dx, axis)
        phi = phi_delta(magnitude, p, delta)
        if phi.size:
            phi_max = max(phi_max, float(phi.max()))
        fluxes.append(phi * normal)
    return tuple(fluxes), phi_max


def diffusive_flux(field: DensityField, p: float, delta: float) -> Tuple[np.ndarray, ...]:
    """
    phi_delta(|G|) G_axis on the interior faces normal to each axis

    G is the face gradient of rho, with the tangential part averaged in 2D.
    """
    fluxes, _ = _diffusive_flux(field.values, field.grid.dx, p, delta)
    return fluxes


def _face_pair(ndim: int, axis: int):
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis], hi[axis] = slice(None, -1), slice(1, None)
    return tuple(lo), tuple(hi)


def _aggregation_flux(values: np.ndarray, velocity: Tuple[np.ndarray, ...], lam: float) -> Tuple[np.ndarray, ...]:
    fluxes = []
    for axis, component in enumerate(velocity):
        lo, hi = _face_pair(values.ndim, axis)
        v_face = 0.5 * (component[lo] + component[hi])
        # transport velocity is -lambda v: mass leaves the right cell when v_face > 0
        upwind = np.where(v_face > 0.0, values[hi], values[lo])
        fluxes.append(lam * v_face * upwind)
    return tuple(fluxes)


def aggregation_flux(field: DensityField, velocity: VectorField, lam: float) -> Tuple[np.ndarray, ...]:
    """lambda v_face rho_upwind on the interior faces; v_face is the average of the adjacent cells."""
    return _aggregation_flux(field.values, velocity.components, lam)


def _divergence(fluxes: Tuple[np.ndarray, ...], dx: float, shape: Tuple[int, ...]) -> np.ndarray:
    """(F_{i+1/2} - F_{i-1/2}) / dx summed over axes with zero flux through the box boundary."""
    total = np.zeros(shape)
    for axis, flux in enumerate(fluxes):
        pad = [(0, 0)] * len(shape)
        pad[axis] = (1, 1)
        padded = np.pad(flux, pad)
        total += np.diff(padded, axis=axis) / dx
    return total


# Time step

def _rate(values: np.ndarray, config: SolverConfig, delta: float,
          velocity: Optional[Tuple[np.ndarray, ...]]) -> Tuple[float, Tuple[np.ndarray, ...]]:
    grid, params = config.grid, config.params
    fluxes, phi_max = _diffusive_flux(values, grid.dx, params.p, delta)
    rate = 2 * grid.d * phi_max * max(1.0, params.p - 1.0) / grid.dx ** 2
    if params.lam > 0.0 and velocity is not None:
        v_max = float(np.sqrt(sum(c * c for c in velocity)).max())
        rate += 2 * grid.d * params.lam * v_max / grid.dx
    return rate, fluxes


def _dt_from_rate(rate: float, config: SolverConfig) -> float:
    if rate <= 0.0:
        return config.dt_cap
    return min(config.cfl / rate, config.dt_cap)


def resolve_delta(config: SolverConfig, initial: DensityField) -> float:
    if config.delta is not None:
        return config.delta
    if config.params.p < 2.0:
        return DELTA_SCALE * initial.max_density / config.grid.dx
    return 0.0


def _velocity(values: np.ndarray, config: SolverConfig, components) -> Optional[Tuple[np.ndarray, ...]]:
    if config.params.lam <= 0.0:
        return None
    volume = config.grid.cell_volume
    return tuple(volume * free_space_convolve(values, k, method=config.convolution) for k in components)


def cfl_dt(field: DensityField, config: SolverConfig, delta: Optional[float] = None) -> float:
    """
    cfl / (2d max phi_delta max(1, p-1) / dx^2 + 2d lambda max|v| / dx), capped at dt_cap
    """
    delta = resolve_delta(config, field) if delta is None else delta
    velocity = None
    if config.params.lam > 0.0:
        velocity = attraction_velocity(field, config.kernel, method=config.convolution).components
    rate, _ = _rate(field.values, config, delta, velocity)
    return _dt_from_rate(rate, config)


def _apply_update(values: np.ndarray, fluxes: Tuple[np.ndarray, ...], dt: float, dx: float) -> np.ndarray:
    updated = values + dt * _divergence(fluxes, dx, values.shape)
    lowest = float(updated.min())
    if lowest < 0.0:
        peak = float(updated.max())
        if -lowest > NEGATIVITY_RTOL * peak:
            raise NonPositivityViolation(
                f"density reached {lowest:.3e} (max {peak:.3e}); time step too large for the fluxes"
            )
        updated = np.maximum(updated, 0.0)
    return updated


def step(field: DensityField, config: SolverConfig, dt: float, delta: Optional[float] = None) -> DensityField:
    """
    One explicit conservative update rho <- rho + dt div(F_diffusion + F_aggregation)

    Raises:
        NonPositivityViolation: a cell went negative beyond round-off
    """
    delta = resolve_delta(config, field) if delta is None else delta
    grid, params = config.grid, config.params
    fluxes = diffusive_flux(field, params.p, delta)
    if params.lam > 0.0:
        velocity = attraction_velocity(field, config.kernel, method=config.convolution)
        transport = aggregation_flux(field, velocity, params.lam)
        fluxes = tuple(a + b for a, b in zip(fluxes, transport))
    return DensityField(grid, _apply_update(field.values, fluxes, dt, grid.dx))


# Integration

def _diagnostics(field: DensityField, config: SolverConfig, t: float, dt: float, residual: float,
                 scheme_residual: float) -> StepDiagnostics:
    params = config.params
    energy = interaction_energy(field, params.alpha, config.kernel.eps or None) if params.lam > 0.0 else 0.0
    return StepDiagnostics(
        t=t,
        dt=dt,
        mass=field.mass,
        min_density=float(field.values.min()),
        max_density=field.max_density,
        entropy=entropy(field),
        p_fisher=p_fisher(field, params.p),
        moment_k=moment(field, config.resolved_moment_k),
        interaction_energy=energy,
        entropy_dissipation_residual=residual,
        scheme_residual=scheme_residual,
    )


def dissipation_residual(old: DensityField, new: DensityField, dt: float, config: SolverConfig) -> float:
    """
    |(S(new) - S(old))/dt - (-I_p + lambda (d - alpha) E)| with I_p and E at the half step
    """
    params = config.params
    mid = DensityField(old.grid, 0.5 * (old.values + new.values))
    production = -p_fisher(mid, params.p)
    if params.lam > 0.0:
        production += aggregation_entropy_production(mid, params.alpha, params.lam, config.kernel.eps or None)
    return abs((entropy(new) - entropy(old)) / dt - production)


def _scheme_production(values: np.ndarray, config: SolverConfig, delta: float, components) -> float:
    grid, params = config.grid, config.params
    fluxes, _ = _diffusive_flux(values, grid.dx, params.p, delta)
    velocity = _velocity(values, config, components)
    if velocity is not None:
        transport = _aggregation_flux(values, velocity, params.lam)
        fluxes = tuple(a + b for a, b in zip(fluxes, transport))
    total = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rho = np.log(values)
        for axis, flux in enumerate(fluxes):
            lo, hi = _face_pair(values.ndim, axis)
            jump = log_rho[hi] - log_rho[lo]
            finite = np.isfinite(jump)
            total -= float(np.sum(flux[finite] * jump[finite]))
    return total * grid.cell_volume / grid.dx


def _entropy_change(old: np.ndarray, new: np.ndarray, cell_volume: float) -> float:
    # differences taken per cell before summation
    return float(np.sum(xlogy(new, new) - xlogy(old, old))) * cell_volume


def scheme_entropy_production(field: DensityField, config: SolverConfig, delta: Optional[float] = None) -> float:
    """
    dS/dt of the semi-discrete scheme at `field`

    -dx^{d-1} sum_faces F (ln rho_hi - ln rho_lo), F the regularized diffusive flux plus
    the upwind transport flux. Faces next to an empty cell are left out.
    """
    delta = resolve_delta(config, field) if delta is None else delta
    components = kernel_components(config.grid, config.kernel) if config.params.lam > 0.0 else ()
    return _scheme_production(field.values, config, delta, components)


def scheme_dissipation_residual(old: DensityField, new: DensityField, dt: float, config: SolverConfig,
                                delta: float) -> float:
    """|(S(new) - S(old))/dt - P_h| with P_h the scheme's entropy production at the half step."""
    mid = DensityField(old.grid, 0.5 * (old.values + new.values))
    change = _entropy_change(old.values, new.values, old.grid.cell_volume)
    return abs(change / dt - scheme_entropy_production(mid, config, delta))


def run(initial: DensityField, config: SolverConfig) -> Trajectory:
    """
    Integrate from `initial` to t_end or a terminal indicator

    Args:
        initial: Initial density on config.grid
        config: Solver configuration

    Returns:
        Trajectory with a diagnostics row at t = 0, every diag_every steps and at the end
    """
    grid, params = config.grid, config.params
    if initial.grid != grid:
        raise ConfigError("initial field lives on a different grid than the configuration")
    if not config.rho_max > initial.max_density:
        raise ConfigError(f"rho_max={config.rho_max} must exceed the initial maximum {initial.max_density:.6g}")

    delta = resolve_delta(config, initial)
    components = kernel_components(grid, config.kernel) if params.lam > 0.0 else ()
    pending = sorted(config.snapshot_times)

    logger.info("Step 1: Integrating d=%d p=%g alpha=%g lambda=%g on n=%d, t_end=%g",
                params.d, params.p, params.alpha, params.lam, grid.n, config.t_end)

    rows = [_diagnostics(initial, config, 0.0, 0.0, math.nan, math.nan)]
    trajectory = Trajectory(config=config, rows=rows, status=TerminalStatus.REACHED_T_END, status_time=0.0,
                            delta=delta)

    values = np.array(initial.values)
    t, steps = 0.0, 0
    while t < config.t_end:
        velocity = _velocity(values, config, components)
        rate, fluxes = _rate(values, config, delta, velocity)
        dt_cfl = _dt_from_rate(rate, config)
        if dt_cfl < config.dt_min:
            logger.warning("[WARNING] Time step collapsed to %.3e at t=%.6g", dt_cfl, t)
            trajectory.status = TerminalStatus.DT_COLLAPSE
            break

        horizon = pending[0] if pending else config.t_end
        dt = min(dt_cfl, horizon - t)
        if velocity is not None:
            transport = _aggregation_flux(values, velocity, params.lam)
            fluxes = tuple(a + b for a, b in zip(fluxes, transport))
        updated = _apply_update(values, fluxes, dt, grid.dx)

        t_new = config.t_end if dt == config.t_end - t else t + dt
        if pending and dt == pending[0] - t:
            t_new = pending[0]
        steps += 1

        blown_up = float(updated.max()) > config.rho_max
        finished = t_new >= config.t_end
        if steps % config.diag_every == 0 or finished or blown_up:
            old = DensityField(grid, values)
            new = DensityField(grid, updated)
            residual = scheme_residual = math.nan
            if dt >= RESIDUAL_MIN_STEP_SHARE * dt_cfl:
                residual = dissipation_residual(old, new, dt, config)
                production = _scheme_production(0.5 * (values + updated), config, delta, components)
                change = _entropy_change(values, updated, grid.cell_volume)
                scheme_residual = abs(change / dt - production)
            rows.append(_diagnostics(new, config, t_new, dt, residual, scheme_residual))
            if not trajectory.boundary_flagged and boundary_mass_fraction(new) >= BOUNDARY_MASS_LIMIT:
                logger.warning("[WARNING] Boundary cells hold >= %g of the mass at t=%.6g", BOUNDARY_MASS_LIMIT, t_new)
                trajectory.boundary_flagged = True

        values, t = updated, t_new
        while pending and pending[0] <= t:
            trajectory.snapshots[pending.pop(0)] = DensityField(grid, values)

        if blown_up:
            logger.warning("[WARNING] Density exceeded rho_max=%g at t=%.6g", config.rho_max, t)
            trajectory.status = TerminalStatus.BLOW_UP
            break

    trajectory.status_time = t
    trajectory.steps = steps
    trajectory.final = DensityField(grid, values)
    logger.info("[OK] Run finished: %s at t=%.6g after %d steps", trajectory.status.value, t, steps)
    return trajectory


# Post-processing

def fit_moment_envelope(trajectory: Trajectory) -> float:
    """
    Smallest C >= 0 with moment(t) <= (moment(0) + 1) e^{C t} - 1 on every recorded row
    """
    rows = trajectory.rows
    base = rows[0].moment_k + 1.0
    rate = 0.0
    for row in rows[1:]:
        if row.t > 0.0:
            rate = max(rate, math.log((row.moment_k + 1.0) / base) / row.t)
    return rate


def _residual_ratios(rows: List[StepDiagnostics], name: str) -> List[float]:
    """Residual over |I_p| on every row that recorded one."""
    ratios = []
    for row in rows:
        residual = getattr(row, name)
        if not math.isnan(residual) and row.p_fisher != 0.0:
            ratios.append(residual / abs(row.p_fisher))
    return ratios


def summarize(trajectory: Trajectory) -> Dict:
    rows = trajectory.rows
    mass0 = rows[0].mass
    ratios = _residual_ratios(rows, "entropy_dissipation_residual")
    scheme_ratios = _residual_ratios(rows, "scheme_residual")
    return {
        "status": trajectory.status.value,
        "t_final": trajectory.status_time,
        "steps": trajectory.steps,
        "params": trajectory.config.params.to_dict(),
        "initial_mass": mass0,
        "mass_drift": max(abs(row.mass - mass0) for row in rows) / mass0,
        "max_density": max(row.max_density for row in rows),
        "min_density": min(row.min_density for row in rows),
        "max_entropy": max(row.entropy for row in rows),
        "max_residual_ratio": max(ratios) if ratios else math.nan,
        "max_scheme_residual_ratio": max(scheme_ratios) if scheme_ratios else math.nan,
        "moment_rate": fit_moment_envelope(trajectory),
        "delta": trajectory.delta,
        "boundary_flagged": trajectory.boundary_flagged,
        "config_sha256": config_hash(trajectory.config.to_dict()),
    }
