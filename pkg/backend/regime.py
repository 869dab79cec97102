"""
Regime Module - Parameter Validation, Critical Exponents & Critical Mass
Classifies (d, p, alpha, lambda) against the fair-competition line alpha = alpha_p
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Tuple

from backend.errors import (
    AlphaOutOfRange,
    CompetitionSumTooSmall,
    ConstantDomainError,
    EmptyKWindow,
    NonPositiveLambda,
    PExponentOutOfRange,
)
from backend.sharp_constants import (
    hls_constant,
    hls_exponent,
    hls_oracle,
    sobolev_constant,
    sobolev_oracle,
)

logger = logging.getLogger(__name__)

FAIR_COMPETITION_RTOL = 1e-12
ORACLE_RTOL = 1e-5

D1_WARNING = "d = 1 lies outside the existence theorem's hypotheses (d >= 2); formulas are applied verbatim"


class Regime(str, Enum):
    DIFFUSION_DOMINATED = "DiffusionDominated"
    FAIR_COMPETITION = "FairCompetition"
    AGGREGATION_DOMINATED = "AggregationDominated"


def alpha_p(d: int, p: float) -> float:
    """Critical kernel exponent p(d+1) - 2d."""
    return p * (d + 1) - 2 * d


def p_window(d: int) -> Tuple[float, float]:
    return 2.0 * d / (d + 1), 3.0 * d / (d + 1)


@dataclass(frozen=True)
class RegimeParams:
    """
    Parameters (d, p, alpha, lambda) with the derived exponents

    Construction does not check ranges; use validate() for that.
    """

    d: int
    p: float
    alpha: float
    lam: float
    warnings: Tuple[str, ...] = field(default=(), compare=False)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def p_star(self) -> float:
        if self.p >= self.d:
            return math.inf
        return self.d * self.p / (self.d - self.p)

    @property
    def r(self) -> float:
        return self.p_star / self.p_conj

    @property
    def alpha_p(self) -> float:
        return alpha_p(self.d, self.p)

    def to_dict(self) -> Dict:
        return {
            "d": self.d,
            "p": self.p,
            "alpha": self.alpha,
            "lambda": self.lam,
            "p_conj": self.p_conj,
            "p_star": self.p_star,
            "r": self.r,
            "alpha_p": self.alpha_p,
            "warnings": list(self.warnings),
        }


def _check_p_window(d: int, p: float) -> None:
    if not isinstance(d, int) or d < 1:
        raise PExponentOutOfRange(f"dimension must be an integer >= 1, got {d!r}")
    lo, hi = p_window(d)
    if not lo < p < hi:
        raise PExponentOutOfRange(
            f"p out of range ({Fraction(2 * d, d + 1)}, {Fraction(3 * d, d + 1)}): p={p}"
        )


def validate(d: int, p: float, alpha: float, lam: float) -> RegimeParams:
    """
    Check every hypothesis of the existence theorem

    Args:
        d: Spatial dimension (d = 1 accepted with a warning)
        p: Diffusion exponent
        alpha: Kernel exponent
        lam: Aggregation intensity

    Returns:
        Validated RegimeParams

    Raises:
        PExponentOutOfRange, AlphaOutOfRange, CompetitionSumTooSmall,
        NonPositiveLambda, EmptyKWindow
    """
    _check_p_window(d, p)
    if not 0.0 < alpha < d:
        raise AlphaOutOfRange(f"alpha out of range (0, {d}): alpha={alpha}")
    ap = alpha_p(d, p)
    if ap + alpha <= 1.0:
        raise CompetitionSumTooSmall(f"alpha_p + alpha = {ap + alpha:g} must exceed 1")
    if not lam > 0.0:
        raise NonPositiveLambda(f"lambda must be positive, got {lam}")

    warnings = ()
    if d == 1:
        logger.warning("[WARNING] %s", D1_WARNING)
        warnings = (D1_WARNING,)
    params = RegimeParams(d=d, p=p, alpha=alpha, lam=lam, warnings=warnings)

    lo, hi = k_window(params)
    if not lo < hi:
        raise EmptyKWindow(f"empty moment window ({lo:g}, {hi:g})")
    return params


def validate_pheat(d: int, p: float) -> RegimeParams:
    """Parameters of the p-heat equation (lambda = 0); alpha is pinned to alpha_p."""
    _check_p_window(d, p)
    warnings = (D1_WARNING,) if d == 1 else ()
    return RegimeParams(d=d, p=p, alpha=alpha_p(d, p), lam=0.0, warnings=warnings)


def k_window(params: RegimeParams) -> Tuple[float, float]:
    """Open interval ((1 - alpha)_+, alpha_p ^ 1) of admissible moment orders."""
    return max(1.0 - params.alpha, 0.0), min(params.alpha_p, 1.0)


def classify(params: RegimeParams) -> Regime:
    ap = params.alpha_p
    if abs(params.alpha - ap) <= FAIR_COMPETITION_RTOL * max(1.0, ap):
        return Regime.FAIR_COMPETITION
    if params.alpha < ap:
        return Regime.DIFFUSION_DOMINATED
    return Regime.AGGREGATION_DOMINATED


def is_keller_segel_point(d: int, p: float, alpha: float) -> bool:
    """(d, p, alpha) = (2, 2, 2): classical Keller-Segel, where all fair-competition lines meet."""
    return d == 2 and math.isclose(p, 2.0) and math.isclose(alpha, 2.0) and math.isclose(alpha_p(d, p), alpha)


@lru_cache(maxsize=None)
def cross_checked_constants(d: int, p: float) -> Dict[str, float]:
    """
    Sharp constants entering C_{d,p}, each verified against its oracle

    When a closed form and its oracle disagree beyond ORACLE_RTOL the oracle
    value is used and the discrepancy logged.
    """
    ap = alpha_p(d, p)
    if not 0.0 < ap < d:
        raise ConstantDomainError(f"alpha_p = {ap:g} outside (0, {d}); C^HLS undefined")

    sobolev = sobolev_constant(d, p)
    sobolev_check = sobolev_oracle(d, p)
    if abs(sobolev - sobolev_check) > ORACLE_RTOL * sobolev_check:
        logger.warning("[WARNING] Sobolev closed form %.12g disagrees with oracle %.12g; using oracle",
                       sobolev, sobolev_check)
        sobolev = sobolev_check

    hls = hls_constant(d, ap)
    hls_check = hls_oracle(d, ap)
    if abs(hls - hls_check) > ORACLE_RTOL * hls_check:
        logger.warning("[WARNING] HLS closed form %.12g disagrees with oracle %.12g; using oracle",
                       hls, hls_check)
        hls = hls_check

    return {"sobolev": sobolev, "hls": hls, "hls_q": hls_exponent(d, ap)}


def critical_constant(d: int, p: float) -> float:
    """C_{d,p} = ((d - alpha_p) C^HLS (C^S / p')^p)^{-1/(3-p)}."""
    assert p < 3.0, "p = 3 cannot occur inside the validity window"
    constants = cross_checked_constants(d, p)
    ap = alpha_p(d, p)
    p_conj = p / (p - 1.0)
    base = (d - ap) * constants["hls"] * (constants["sobolev"] / p_conj) ** p
    return base ** (-1.0 / (3.0 - p))


def critical_mass(params: RegimeParams) -> float:
    """
    Mass threshold C_{d,p} lambda^{-1/(3-p)} of the fair-competition case

    Raises:
        ConstantDomainError: alpha_p outside (0, d) or p >= d (no Sobolev constant)
    """
    if params.p >= params.d:
        raise ConstantDomainError(f"Sobolev constant undefined for p={params.p} >= d={params.d}")
    if not params.lam > 0.0:
        raise NonPositiveLambda(f"lambda must be positive, got {params.lam}")
    return critical_constant(params.d, params.p) * params.lam ** (-1.0 / (3.0 - params.p))


def fair_competition_factor(params: RegimeParams, mass: float) -> float:
    """1 - lambda C_{d,p}^{p-3} M^{3-p}; positive exactly below the critical mass."""
    c = critical_constant(params.d, params.p)
    return 1.0 - params.lam * c ** (params.p - 3.0) * mass ** (3.0 - params.p)


def exponent_identities(params: RegimeParams) -> Dict[str, Tuple[float, float]]:
    """
    Exponent bookkeeping of the entropy-dissipation estimate, q = 2d/(2d - alpha)

    Returns:
        name -> (left side, right side); each pair must agree
    """
    if params.p >= params.d:
        raise ConstantDomainError("exponent identities need p < d")
    p, ap, alpha = params.p, params.alpha_p, params.alpha
    q = hls_exponent(params.d, alpha)
    q_conj = q / (q - 1.0)
    r = params.r
    r_conj = r / (r - 1.0)
    p_conj = params.p_conj
    return {
        "fisher_power": (2.0 * r_conj * p_conj / (q_conj * p), alpha / ap),
        "mass_power": (2.0 - 2.0 * r_conj / q_conj, 2.0 * (1.0 - (p - 1.0) * alpha / (2.0 * ap))),
        "constant_power": (2.0 * r_conj * p_conj / q_conj, p * alpha / ap),
    }
