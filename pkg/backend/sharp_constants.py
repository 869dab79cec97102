"""
Sharp Constants Module - Sobolev & Hardy-Littlewood-Sobolev Best Constants
Closed forms from the classical literature, cross-checked against quadrature
on the extremal profiles
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, special

from backend.errors import ConstantDomainError

logger = logging.getLogger(__name__)

SOBOLEV_TEST_POINTS: Tuple[Tuple[int, float], ...] = ((3, 2.0), (2, 1.5), (3, 1.5), (4, 2.5))
HLS_TEST_POINTS: Tuple[Tuple[int, float], ...] = ((1, 0.5), (2, 1.0), (2, 0.5), (3, 2.0), (3, 1.5))

_QUAD_OPTS = dict(epsabs=0.0, epsrel=1e-12, limit=400)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} (equals 2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def radial_integral(func: Callable[[float], float], d: int, scale: float = 1.0, **quad_opts) -> float:
    """
    Integrate a radial function over R^d with adaptive quadrature

    The half-line is split at `scale` so that QUADPACK sees the bulk of the
    profile on a finite interval and only the tail on the infinite one.

    Args:
        func: Radial profile f(r)
        d: Spatial dimension
        scale: Split point of [0, inf)

    Returns:
        |S^{d-1}| * int_0^inf f(r) r^{d-1} dr
    """
    opts = dict(_QUAD_OPTS)
    opts.update(quad_opts)

    def integrand(r: float) -> float:
        return func(r) * r ** (d - 1)

    head, _ = integrate.quad(integrand, 0.0, scale, **opts)
    tail, _ = integrate.quad(integrand, scale, np.inf, **opts)
    return sphere_area(d) * (head + tail)


# Sobolev: ||f||_{q*} <= C^S_{d,q} ||grad f||_q

def _check_sobolev_domain(d: int, q: float) -> None:
    if d < 2 or not 1.0 < q < d:
        raise ConstantDomainError(f"Sobolev constant needs 1 < q < d, got d={d}, q={q}")


@lru_cache(maxsize=None)
def sobolev_constant(d: int, q: float) -> float:
    """
    Best constant of the Sobolev embedding (Aubin / Talenti closed form)

    Args:
        d: Spatial dimension
        q: Integrability exponent of the gradient, 1 < q < d

    Returns:
        C^S_{d,q} > 0
    """
    _check_sobolev_domain(d, q)
    log_c = (
        -0.5 * math.log(math.pi)
        - math.log(d) / q
        + (1.0 - 1.0 / q) * math.log((q - 1.0) / (d - q))
        + (
            special.gammaln(1.0 + d / 2.0)
            + special.gammaln(d)
            - special.gammaln(d / q)
            - special.gammaln(1.0 + d - d / q)
        ) / d
    )
    return float(math.exp(log_c))


def sobolev_ratio(d: int, q: float, b: float = 1.0) -> float:
    """||h_b||_{q*} / ||grad h_b||_q on the extremal family h_b = (1 + b r^{q'})^{1-d/q}."""
    _check_sobolev_domain(d, q)
    s = q / (q - 1.0)
    q_star = d * q / (d - q)
    scale = b ** (-1.0 / s)

    def h_power(r: float) -> float:
        # h^{q*} = (1 + b r^s)^{-d}
        return (1.0 + b * r ** s) ** (-d)

    def grad_power(r: float) -> float:
        dh = (d / q - 1.0) * b * s * r ** (s - 1.0) * (1.0 + b * r ** s) ** (-d / q)
        return dh ** q

    numerator = radial_integral(h_power, d, scale)
    denominator = radial_integral(grad_power, d, scale)
    return numerator ** (1.0 / q_star) / denominator ** (1.0 / q)


@lru_cache(maxsize=None)
def sobolev_oracle(d: int, q: float) -> float:
    """Maximise the extremal-family ratio over the dilation parameter b."""
    result = optimize.minimize_scalar(
        lambda log_b: -sobolev_ratio(d, q, math.exp(log_b)),
        bounds=(-2.0, 2.0),
        method="bounded",
        options={"xatol": 1e-6},
    )
    return max(-float(result.fun), sobolev_ratio(d, q, 1.0))


# Hardy-Littlewood-Sobolev, diagonal case q = 2d / (2d - alpha)

def _check_hls_domain(d: int, alpha: float) -> None:
    if d < 1 or not 0.0 < alpha < d:
        raise ConstantDomainError(f"HLS constant needs 0 < alpha < d, got d={d}, alpha={alpha}")


def hls_exponent(d: int, alpha: float) -> float:
    return 2.0 * d / (2.0 * d - alpha)


@lru_cache(maxsize=None)
def hls_constant(d: int, alpha: float) -> float:
    """
    Best constant of the diagonal Hardy-Littlewood-Sobolev inequality (Lieb)

    Args:
        d: Spatial dimension
        alpha: Kernel exponent, 0 < alpha < d

    Returns:
        C^HLS_{d,alpha,q} with q = 2d/(2d-alpha)
    """
    _check_hls_domain(d, alpha)
    log_c = (
        0.5 * alpha * math.log(math.pi)
        + special.gammaln(0.5 * (d - alpha))
        - special.gammaln(d - 0.5 * alpha)
        + (alpha / d - 1.0) * (special.gammaln(0.5 * d) - special.gammaln(d))
    )
    return float(math.exp(log_c))


@lru_cache(maxsize=None)
def hls_oracle(d: int, alpha: float) -> float:
    """
    HLS ratio of the extremal profile f = (1 + |x|^2)^{-(2d-alpha)/2}

    The double integral is reduced to two radial variables; the angular
    average of |x - y|^{-alpha} is the Gegenbauer form
    |S^{d-1}|^2 R^{-alpha} 2F1(alpha/2, alpha/2 - d/2 + 1; d/2; (r_</R)^2).
    """
    _check_hls_domain(d, alpha)
    a = 0.5 * (2.0 * d - alpha)
    omega = sphere_area(d)
    f1, f2, f3 = 0.5 * alpha, 0.5 * alpha - 0.5 * d + 1.0, 0.5 * d
    # 2F1 ~ A (1 - t^2)^{gap} at t = 1; for gap < 0 the factor (1 - t)^{gap} goes into the quad weight
    gap = f3 - f1 - f2
    singular = gap < 0.0
    if singular:
        leading = math.exp(special.gammaln(f3) + special.gammaln(-gap) - special.gammaln(f1) - special.gammaln(f2))

    def profile(r: float) -> float:
        return (1.0 + r * r) ** (-a)

    def inner(r: float) -> float:
        # integral over the smaller radius s = r t, t in [0, 1]
        def g(t: float) -> float:
            return profile(r * t) * t ** (d - 1) * special.hyp2f1(f1, f2, f3, t * t)

        def g_regular(t: float) -> float:
            if t >= 1.0:
                return profile(r) * leading * 2.0 ** gap
            return g(t) * (1.0 - t) ** (-gap)

        opts = dict(epsabs=0.0, epsrel=1e-11, limit=400)
        if singular:
            value, _ = integrate.quad(g_regular, 0.0, 1.0, weight="alg", wvar=(0.0, gap), **opts)
        else:
            value, _ = integrate.quad(g, 0.0, 1.0, **opts)
        return value

    def outer(r: float) -> float:
        return profile(r) * r ** (2 * d - 1 - alpha) * inner(r)

    opts = dict(epsabs=0.0, epsrel=1e-10, limit=400)
    head, _ = integrate.quad(outer, 0.0, 1.0, **opts)
    tail, _ = integrate.quad(outer, 1.0, np.inf, **opts)
    double = 2.0 * omega * omega * (head + tail)

    q = hls_exponent(d, alpha)
    norm_q = radial_integral(lambda r: (1.0 + r * r) ** (-d), d) ** (1.0 / q)
    return double / norm_q ** 2


def constants_report(
    sobolev_points: Optional[Iterable[Tuple[int, float]]] = None,
    hls_points: Optional[Iterable[Tuple[int, float]]] = None,
) -> List[Dict]:
    """
    Compare every closed form with its quadrature oracle

    Returns:
        One row per (constant, d, exponent) with the relative gap
    """
    rows = []
    for d, q in sobolev_points or SOBOLEV_TEST_POINTS:
        closed, oracle = sobolev_constant(d, q), sobolev_oracle(d, q)
        rows.append(_gap_row("sobolev", d, q, closed, oracle))
    for d, alpha in hls_points or HLS_TEST_POINTS:
        closed, oracle = hls_constant(d, alpha), hls_oracle(d, alpha)
        rows.append(_gap_row("hls", d, alpha, closed, oracle))
    return rows


def _gap_row(name: str, d: int, exponent: float, closed: float, oracle: float) -> Dict:
    gap = abs(closed - oracle) / abs(oracle)
    if gap > 1e-5:
        logger.warning("[WARNING] %s constant d=%d exponent=%g: closed form %.12g vs oracle %.12g",
                       name, d, exponent, closed, oracle)
    return {
        "constant": name,
        "d": d,
        "exponent": exponent,
        "closed_form": closed,
        "oracle": oracle,
        "rel_gap": gap,
    }
