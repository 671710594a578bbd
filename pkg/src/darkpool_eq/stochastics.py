"""Normal utilities and dark-pool execution rates.

The execution rates are

    r_bar = E[min{1, (gb mu + ad Z+) / (gl mu + ad Z-)}]
    r_low = E[min{1, (gl mu + ad Z-) / (gb mu + ad Z+)}]

with ``gb``, ``gl`` the informed right- and wrong-direction dark masses and
``ad`` the uninformed dark fraction. ``r_bar`` is the fill rate of the short
(wrong-direction) side. Both depend only on the direction of ``(gb mu,
gl mu, ad scale)``, so inputs are normalized before integration.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincinv, gammainccinv, log_ndtr, ndtr
from scipy.stats import qmc

from . import kernels
from .model import (DomainError, NumericError, NumericsConfig, ZLaw,
                    log_belief_slope)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_TAIL = 1e-17


def normal_cdf(x):
    """Standard normal CDF."""
    out = ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
    return out if out.ndim else float(out)


def log_normal_cdf(x):
    out = log_ndtr(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def log_normal_pdf(x: float) -> float:
    return -0.5 * x * x - _LOG_SQRT_2PI


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def log_normal_mass(x0: float, x1: float) -> float:
    """``log(Phi(x1) - Phi(x0))`` for ``x0 <= x1``.

    Narrow intervals integrate the density directly, which avoids the
    cancellation of nearly equal CDF values; wide ones difference the
    log-CDF on the short tail side. Finite far below the float range.
    """
    if not x1 > x0:
        return -math.inf
    width = x1 - x0
    if width * (max(abs(x0), abs(x1)) + 1.0) < 1.0:
        t = 0.5 * (x0 + x1) + 0.5 * width * _GL_X
        lg = -0.5 * t * t - _LOG_SQRT_2PI + np.log(_GL_W)
        top = lg.max()
        return float(top + math.log(np.exp(lg - top).sum()) + math.log(0.5 * width))
    if x0 > 0.0:
        x0, x1 = -x1, -x0
    l1 = float(log_ndtr(x1))
    l0 = float(log_ndtr(x0))
    if l0 == -math.inf:
        return l1
    return l1 + math.log1p(-math.exp(l0 - l1))


def normal_mass(x0: float, x1: float) -> float:
    """``Phi(x1) - Phi(x0)`` for ``x0 <= x1``."""
    return math.exp(log_normal_mass(x0, x1))


# --------------------------------------------------------------------------
# Deterministic quadrature


@functools.lru_cache(maxsize=64)
def _rule(shape: float, order: int):
    x_hi, w_hi = np.polynomial.legendre.leggauss(order)
    x_lo, w_lo = np.polynomial.legendre.leggauss(order // 2)
    ylo = float(gammaincinv(shape, _TAIL))
    yhi = float(gammainccinv(shape, _TAIL))
    return (ylo, yhi, np.ascontiguousarray(x_hi), np.ascontiguousarray(w_hi),
            np.ascontiguousarray(x_lo), np.ascontiguousarray(w_lo))


@dataclass(frozen=True)
class RateEstimate:
    r_bar: float
    r_low: float
    error: float
    method: str  # "quadrature", "qmc" or "closed-form"

    def as_tuple(self):
        return self.r_bar, self.r_low


def _closed_form(a: float, b: float) -> tuple[float, float]:
    # no liquidity in the pool: the ratio is deterministic
    if a == 0.0 and b == 0.0:
        raise DomainError("dark pool has no order flow at all")
    rb = 1.0 if b == 0.0 else min(1.0, a / b)
    rl = 1.0 if a == 0.0 else min(1.0, b / a)
    return rb, rl


def rate_abc(a: float, b: float, c: float, z_law: ZLaw, cfg: NumericsConfig) -> RateEstimate:
    """Rates for normalized masses ``a = gb mu``, ``b = gl mu`` and
    ``c = ad * scale`` with unit-scale Gamma sides.

    The QMC path is taken automatically when the quadrature
    self-estimate exceeds ``cfg.tol_expect``.
    """
    if min(a, b, c) < 0 or not all(map(math.isfinite, (a, b, c))):
        raise DomainError(f"masses must be finite and nonnegative: {(a, b, c)}")
    if c == 0.0:
        return RateEstimate(*_closed_form(a, b), 0.0, "closed-form")
    m = max(a, b, c)
    a, b, c = a / m, b / m, c / m
    ylo, yhi, xh, wh, xl, wl = _rule(z_law.shape, cfg.quad_order)
    rb, eb = kernels.rate(a, b, c, z_law.shape, ylo, yhi, xh, wh, xl, wl)
    rl, el = kernels.rate(b, a, c, z_law.shape, ylo, yhi, xh, wh, xl, wl)
    err = max(eb, el)
    if err <= cfg.tol_expect:
        return RateEstimate(min(rb, 1.0), min(rl, 1.0), err, "quadrature")
    q = rates_qmc_abc(a, b, c, z_law, cfg)
    if not (math.isfinite(q.r_bar) and math.isfinite(q.r_low)):
        raise NumericError("execution-rate integration failed",
                           trace={"abc": (a, b, c), "quad_error": err})
    return q


def execution_rates(gamma_bar_d, gamma_low_d, alpha_d, mu, z_law: ZLaw,
                    cfg: NumericsConfig | None = None):
    """Dark-pool execution rates ``(r_bar, r_low)``.

    Parameters
    ----------
    gamma_bar_d, gamma_low_d : float
        Fractions of informed traders sending right- and wrong-direction
        orders to the dark pool.
    alpha_d : float
        Fraction of liquidity traders in the dark pool.
    mu : float
        Mass of informed traders.
    z_law : ZLaw
        Law of each liquidity side.
    cfg : NumericsConfig, optional

    Returns
    -------
    (float, float)
        Fill rates of the wrong-direction and right-direction orders.
        Without liquidity flow the pool fills deterministically, which
        gives ``(1, 0)`` for one-sided informed flow.
    """
    cfg = cfg or NumericsConfig()
    est = rate_abc(gamma_bar_d * mu, gamma_low_d * mu, alpha_d * z_law.scale, z_law, cfg)
    return est.as_tuple()


def execution_rates_log(log_a: float, log_b: float, log_c: float, z_law: ZLaw,
                        cfg: NumericsConfig) -> RateEstimate:
    """Rates from log masses; survives masses far below the float range."""
    m = max(log_a, log_b, log_c)
    if m == -math.inf:
        raise DomainError("dark pool has no order flow at all")
    a, b, c = (math.exp(v - m) for v in (log_a, log_b, log_c))
    return rate_abc(a, b, c, z_law, cfg)


def pooling_ratio(z_law: ZLaw, cfg: NumericsConfig | None = None) -> float:
    """``E[min{1, Z+/Z-}]``, the fill rate of a pool with liquidity flow only."""
    return rate_abc(0.0, 0.0, 1.0, z_law, cfg or NumericsConfig()).r_bar


def execution_rates_limit(s0_scaled: float, sigma_ratio: float, params):
    """Rates on the diagonal ``s1 -> s0``.

    Dark masses shrink to zero there, but their proportions converge: the
    informed masses behave like ``phi(s0 -/+ sigma) mu`` and the liquidity
    fraction like ``2 G'(2B(s0) - 1) B'(s0)``. At ``s0 = 0`` or
    ``sigma_ratio = 0`` the convention ``(1, 1)`` applies.
    """
    if s0_scaled < 0 or sigma_ratio < 0:
        raise DomainError("s0_scaled and sigma_ratio must be nonnegative")
    if s0_scaled == 0.0 or sigma_ratio == 0.0:
        return 1.0, 1.0
    est = _limit_estimate(s0_scaled, sigma_ratio, params)
    return est.as_tuple()


def _limit_estimate(s0: float, sigma: float, params) -> RateEstimate:
    log_mu = math.log(params.mu)
    log_a = log_normal_pdf(s0 - sigma) + log_mu
    log_b = log_normal_pdf(s0 + sigma) + log_mu
    g1 = float(params.delay_cdf.density(math.tanh(s0 * sigma)))
    log_c = (math.log(2.0 * g1) + log_belief_slope(s0, sigma)
             + math.log(params.z_law.scale)) if g1 > 0 else -math.inf
    return execution_rates_log(log_a, log_b, log_c, params.z_law, params.numerics)


# --------------------------------------------------------------------------
# Quasi-Monte Carlo


@functools.lru_cache(maxsize=8)
def _sobol_gamma(shape: float, n: int, seed: int, replicates: int):
    """Scrambled Sobol pairs mapped to unit-scale Gamma; ``replicates``
    independent scramblings of ``n // replicates`` points each."""
    m = max(int(round(math.log2(max(n // replicates, 2)))), 1)
    ss = np.random.SeedSequence(seed)
    out = []
    for child in ss.spawn(replicates):
        eng = qmc.Sobol(d=2, scramble=True, seed=np.random.default_rng(child))
        u = eng.random_base2(m)
        u = np.clip(u, 1e-300, 1.0 - 1e-16)
        out.append(gammaincinv(shape, u))
    z = np.stack(out)
    z.setflags(write=False)
    return z


def rates_qmc_abc(a, b, c, z_law: ZLaw, cfg: NumericsConfig, replicates: int = 16,
                  n_points: int | None = None, seed: int | None = None) -> RateEstimate:
    """Randomized QMC estimate; ``error`` is the standard error across
    scramblings (the larger of the two rates)."""
    n = int(n_points or cfg.qmc_points)
    z = _sobol_gamma(z_law.shape, n, int(cfg.seed if seed is None else seed), replicates)
    xp, xm = z[..., 0], z[..., 1]
    num = a + c * xp
    den = b + c * xm
    with np.errstate(divide="ignore", invalid="ignore"):
        rb = np.where(den > 0, np.minimum(1.0, num / den), 1.0).mean(axis=1)
        rl = np.where(num > 0, np.minimum(1.0, den / num), 1.0).mean(axis=1)
    k = len(rb)
    se = max(rb.std(ddof=1), rl.std(ddof=1)) / math.sqrt(k)
    return RateEstimate(float(rb.mean()), float(rl.mean()), float(se), "qmc")


def execution_rates_qmc(gamma_bar_d, gamma_low_d, alpha_d, mu, z_law: ZLaw,
                        cfg: NumericsConfig | None = None, n_points=None, seed=None):
    """QMC counterpart of :func:`execution_rates`.

    Returns
    -------
    (r_bar, r_low, standard_error)
    """
    cfg = cfg or NumericsConfig()
    a, b, c = gamma_bar_d * mu, gamma_low_d * mu, alpha_d * z_law.scale
    if c == 0.0:
        rb, rl = _closed_form(a, b)
        return rb, rl, 0.0
    est = rates_qmc_abc(a, b, c, z_law, cfg, n_points=n_points, seed=seed)
    return est.r_bar, est.r_low, est.error
