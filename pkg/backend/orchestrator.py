"""
Orchestrator - Verification Suites, Regime Reports & Mass Sweeps
Coordinates the regime, functionals and solver modules into the runs the
command line and HTTP surfaces expose
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

from scipy import fft

from backend.errors import ConfigError, ConstantDomainError, PladError
from backend.fields import (
    DensityField,
    GaussianProfile,
    Grid,
    KernelSpec,
    discretize,
    random_mixture,
    rescale_to_mass,
)
from backend.functionals import (
    CheckResult,
    TOL_GRID,
    check_aggregation_bound,
    check_gns,
    check_moment_lemma,
    comparison_ratio,
    entropy_lower_bound_check,
)
from backend.regime import (
    RegimeParams,
    classify,
    critical_mass,
    cross_checked_constants,
    critical_constant,
    exponent_identities,
    is_keller_segel_point,
    k_window,
    validate,
    validate_pheat,
)
from backend.sharp_constants import constants_report
from backend.solver import SolverConfig, run, summarize
from backend.utils import get_thread_count, make_rng

logger = logging.getLogger(__name__)

SUITES = ("gns", "moment", "entropy-bound", "constants", "dissipation", "aggregation")

# Corpus grids: the mixtures stay 6.5 standard deviations inside the box
CORPUS_GRIDS = {1: Grid(d=1, half_width=5.0, n=256), 2: Grid(d=2, half_width=5.0, n=96)}

CONSTANTS_RTOL = 1e-5

# Parameter sets exercised by the moment suite: (d, p, k); p = 2.2 in d = 2 is outside the
# existence window but exercises the p >= 2 branch
MOMENT_CASES: Tuple[Tuple[int, float, float], ...] = ((1, 1.4, 0.5), (2, 1.5, 0.4), (2, 1.9, 0.5), (2, 2.2, 0.5))


def fair_competition_params(d: int, p: float, lam: float = 1.0) -> RegimeParams:
    """Validated parameters on the fair-competition line alpha = alpha_p."""
    return validate(d, p, p * (d + 1) - 2 * d, lam)


def build_corpus(samples: int, seed: int, dims: Sequence[int] = (1, 2)) -> List[Tuple[str, DensityField]]:
    """
    Seeded random Gaussian mixtures, alternating over `dims`

    Returns:
        (field_id, field) pairs; the same seed always gives the same corpus
    """
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples}")
    rng = make_rng(seed)
    corpus = []
    for i in range(samples):
        d = dims[i % len(dims)]
        grid = CORPUS_GRIDS[d]
        corpus.append((f"mix-{seed}-{i:03d}-d{d}", discretize(random_mixture(rng, grid), grid)))
    return corpus


# Suites

def _suite_gns(samples: int, seed: int) -> List[CheckResult]:
    params = fair_competition_params(2, 5.0 / 3.0)
    q = 2.0 * params.d / (2.0 * params.d - params.alpha_p)
    return [check_gns(field, params, q, field_id) for field_id, field in build_corpus(samples, seed, dims=(2,))]


def _suite_moment(samples: int, seed: int) -> List[CheckResult]:
    results = []
    for field_id, field in build_corpus(samples, seed):
        for d, p, k in MOMENT_CASES:
            if d != field.grid.d:
                continue
            params = RegimeParams(d=d, p=p, alpha=p * (d + 1) - 2 * d, lam=1.0)
            results.append(check_moment_lemma(field, params, k, f"{field_id}-p{p:g}"))
    return results


def _suite_entropy_bound(samples: int, seed: int) -> List[CheckResult]:
    results = []
    for field_id, field in build_corpus(samples, seed):
        for k in (0.5, 1.0):
            results.append(entropy_lower_bound_check(field, k, f"{field_id}-k{k:g}"))
    return results


def _suite_aggregation(samples: int, seed: int) -> List[CheckResult]:
    params = fair_competition_params(2, 5.0 / 3.0)
    return [check_aggregation_bound(field, params, field_id)
            for field_id, field in build_corpus(samples, seed, dims=(2,))]


def _suite_constants(samples: int, seed: int) -> List[CheckResult]:
    results = []
    for row in constants_report():
        gap = row["rel_gap"]
        results.append(CheckResult(
            field_id=f"{row['constant']}-d{row['d']}-{row['exponent']:g}",
            check="constants",
            lhs=row["closed_form"],
            rhs=row["oracle"],
            ratio=gap / CONSTANTS_RTOL,
            passed=gap <= CONSTANTS_RTOL,
            details=row,
        ))
    # M_c(lambda) lambda^{1/(3-p)} must not depend on lambda
    params = fair_competition_params(2, 5.0 / 3.0)
    base = critical_mass(params)
    for lam in (0.5, 2.0, 7.0):
        scaled = critical_mass(RegimeParams(d=2, p=params.p, alpha=params.alpha, lam=lam))
        predicted = base * lam ** (-1.0 / (3.0 - params.p))
        gap = abs(scaled - predicted) / predicted
        results.append(CheckResult(field_id=f"critical-mass-lambda{lam:g}", check="constants", lhs=scaled,
                                   rhs=predicted, ratio=scaled / predicted, passed=gap <= 1e-12))
    return results


# Dissipation runs. delta is fixed, so the CFL step scales like dx^2
DISSIPATION_DELTA = 1e-6
DISSIPATION_T_END = 5e-3
DISSIPATION_LIMIT = 0.02
REFINEMENT_GAIN = 3.0


def dissipation_run(lam: float, n: int, t_end: float = DISSIPATION_T_END, delta: Optional[float] = DISSIPATION_DELTA,
                    diag_every: int = 50):
    """d = 1, p = 1.4 run from a standard Gaussian on [-8, 8]; returns the trajectory."""
    grid = Grid(d=1, half_width=8.0, n=n)
    if lam > 0.0:
        params = validate(1, 1.4, 0.3, lam)
    else:
        params = validate_pheat(1, 1.4)
    config = SolverConfig(params=params, grid=grid, kernel=KernelSpec.default_for(grid, params.alpha),
                          t_end=t_end, delta=delta, diag_every=diag_every, convolution="fft")
    initial = discretize(GaussianProfile(center=(0.0,), sigma=1.0, mass=1.0), grid)
    return run(initial, config)


def _suite_dissipation(samples: int, seed: int) -> List[CheckResult]:
    results = []
    for lam in (0.0, 0.5):
        coarse = summarize(dissipation_run(lam, 256))["max_scheme_residual_ratio"]
        fine = summarize(dissipation_run(lam, 512))["max_scheme_residual_ratio"]
        results.append(CheckResult(field_id=f"gaussian-lambda{lam:g}-n256", check="dissipation", lhs=coarse,
                                   rhs=DISSIPATION_LIMIT, ratio=coarse / DISSIPATION_LIMIT,
                                   passed=coarse <= DISSIPATION_LIMIT))
        gained = REFINEMENT_GAIN * fine
        ratio = comparison_ratio(gained, coarse)
        results.append(CheckResult(field_id=f"gaussian-lambda{lam:g}-refinement", check="dissipation", lhs=gained,
                                   rhs=coarse, ratio=ratio, passed=ratio <= 1.0,
                                   details={"n256": coarse, "n512": fine}))
    # the continuous identity dS/dt = -I_p, with the default delta
    identity = summarize(dissipation_run(0.0, 256, t_end=1e-3, delta=None))["max_residual_ratio"]
    results.append(CheckResult(field_id="gaussian-lambda0-identity", check="dissipation", lhs=identity,
                               rhs=DISSIPATION_LIMIT, ratio=identity / DISSIPATION_LIMIT,
                               passed=identity <= DISSIPATION_LIMIT))
    return results


_SUITE_RUNNERS = {
    "gns": _suite_gns,
    "moment": _suite_moment,
    "entropy-bound": _suite_entropy_bound,
    "constants": _suite_constants,
    "dissipation": _suite_dissipation,
    "aggregation": _suite_aggregation,
}


def run_suite(suite: str, samples: int = 100, seed: int = 7) -> List[CheckResult]:
    """
    Execute one verification suite

    Args:
        suite: One of SUITES
        samples: Corpus size for the randomized suites
        seed: Corpus seed

    Returns:
        CheckResult rows in a deterministic order
    """
    if suite not in _SUITE_RUNNERS:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    logger.info("Step 1: Running suite '%s' (samples=%d, seed=%d)", suite, samples, seed)
    results = _SUITE_RUNNERS[suite](samples, seed)
    failed = sum(1 for r in results if not r.passed)
    if failed:
        logger.warning("[WARNING] %d/%d checks failed in suite '%s'", failed, len(results), suite)
    else:
        logger.info("[OK] Suite '%s': %d checks passed (tolerance %g)", suite, len(results), TOL_GRID)
    return results


# Regime report

def classify_report(d: int, p: float, alpha: float, lam: float) -> Dict:
    """
    Regime, exponents, moment window, sharp constants and critical mass

    Raises:
        RegimeError: parameters outside the existence theorem's hypotheses
    """
    params = validate(d, p, alpha, lam)
    report = {
        "status": "success",
        "regime": classify(params).value,
        "params": params.to_dict(),
        "k_window": list(k_window(params)),
        "keller_segel_point": is_keller_segel_point(d, p, alpha),
        "warnings": list(params.warnings),
    }
    try:
        report["constants"] = cross_checked_constants(d, p)
        report["C_dp"] = critical_constant(d, p)
        report["critical_mass"] = critical_mass(params)
        report["exponent_identities"] = {name: list(pair) for name, pair in exponent_identities(params).items()}
    except ConstantDomainError as e:
        logger.warning("[WARNING] %s", e)
        report["constants"] = None
        report["C_dp"] = None
        report["critical_mass"] = None
        report["exponent_identities"] = None
        report["warnings"].append(str(e))
    return report


# Mass sweeps

SWEEP_HEADER = ("multiplier", "M0", "M0_over_Mc", "status", "boundary_flagged", "max_entropy", "max_density")


def _sweep_one(multiplier: float, base_field: DensityField, config: SolverConfig, m_c: float) -> Dict:
    target = multiplier * m_c
    initial = rescale_to_mass(base_field, target)
    boundary_flagged = False
    try:
        if not config.rho_max > initial.max_density:
            raise ConfigError(f"rho_max={config.rho_max} below the initial maximum {initial.max_density:.6g}")
        summary = summarize(run(initial, config))
        status, max_entropy, max_density = summary["status"], summary["max_entropy"], summary["max_density"]
        boundary_flagged = summary["boundary_flagged"]
    except PladError as e:
        logger.warning("[WARNING] Sweep multiplier %g failed: %s", multiplier, e)
        status, max_entropy, max_density = type(e).__name__, math.nan, math.nan
    if boundary_flagged:
        logger.warning("[WARNING] Sweep multiplier %g reached the box boundary; the row is invalid", multiplier)
    return {
        "multiplier": multiplier,
        "M0": initial.mass,
        "M0_over_Mc": initial.mass / m_c,
        "status": status,
        "boundary_flagged": boundary_flagged,
        "max_entropy": max_entropy,
        "max_density": max_density,
    }


def run_mass_sweep(config: SolverConfig, initial_profile, multipliers: Sequence[float],
                   max_workers: Optional[int] = None) -> List[Dict]:
    """
    Run the same configuration with the initial mass set to multiples of M_c

    Runs execute concurrently; rows come back ordered by multiplier. PLAD_THREADS
    is split between the pool and the FFT workers of each run.
    """
    if not multipliers:
        raise ConfigError("at least one mass multiplier is required")
    if any(m <= 0.0 for m in multipliers):
        raise ConfigError("mass multipliers must be positive")
    m_c = critical_mass(config.params)
    base_field = discretize(initial_profile, config.grid)
    ordered = sorted(float(m) for m in multipliers)
    budget = get_thread_count()
    workers = max_workers or budget
    fft_workers = max(1, budget // workers)
    logger.info("Step 1: Sweeping %d masses around M_c=%.6g with %d worker(s), %d FFT worker(s) each",
                len(ordered), m_c, workers, fft_workers)

    def sweep_one(multiplier: float) -> Dict:
        with fft.set_workers(fft_workers):
            return _sweep_one(multiplier, base_field, config, m_c)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        rows = list(executor.map(sweep_one, ordered))
    flagged = sum(1 for row in rows if row["boundary_flagged"])
    if flagged:
        logger.warning("[WARNING] %d/%d sweep runs put mass on the boundary", flagged, len(rows))
    logger.info("[OK] Sweep complete")
    return rows
