"""Single-venue (exchange only) equilibrium and its limits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.optimize import brentq
from scipy.special import ndtr

from .model import ModelParams, NumericError, cutoff_distance, spread_norm
from .stochastics import log_normal_cdf

S_MAX = 50.0


@dataclass(frozen=True)
class BenchmarkEquilibrium:
    """Exchange-only equilibrium in scaled units.

    ``log_gamma_low_e`` keeps the wrong-direction fraction when it is
    below the float range.
    """

    sigma_ratio: float
    s_hat_scaled: float
    d_hat: float
    spread_norm: float
    gamma_bar_e: float
    gamma_low_e: float
    alpha_e: float
    residual: float
    log_gamma_low_e: float

    model = "benchmark"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model
        return d


def _parts(s: float, sigma: float, params: ModelParams):
    d = cutoff_distance(s, sigma)
    gb = float(ndtr(sigma - s))
    gl = float(ndtr(-s - sigma))
    ae = 1.0 - float(params.delay_cdf.cdf(d))
    return d, gb, gl, ae


def root_function(s: float, sigma: float, params: ModelParams) -> float:
    """Scalar equation whose positive root is the exchange cutoff.

    Negative just above zero and positive for large ``s``.
    """
    d, gb, gl, ae = _parts(s, sigma, params)
    # Phi(s + sigma) - Phi(s - sigma) = gb - gl
    return d * (gb + gl + ae * params.mu_ratio) - (gb - gl)


def solve_benchmark(params: ModelParams) -> BenchmarkEquilibrium:
    """Solve the exchange-only equilibrium.

    Raises
    ------
    NumericError
        When no sign change is found on ``(0, S_MAX]``.
    """
    sigma = params.sigma_ratio
    tol = params.numerics.tol_root
    lo, hi = 1e-12, 1.0
    f = lambda s: root_function(s, sigma, params)
    flo = f(lo)
    trace = [(lo, flo)]
    fhi = f(hi)
    trace.append((hi, fhi))
    while fhi <= 0.0:
        if hi >= S_MAX:
            raise NumericError("no sign change of the cutoff equation", trace=trace)
        lo, flo = hi, fhi
        hi = min(2.0 * hi, S_MAX)
        fhi = f(hi)
        trace.append((hi, fhi))
    if flo >= 0.0:
        raise NumericError("cutoff equation not negative near zero", trace=trace)
    s = brentq(f, lo, hi, xtol=1e-3 * tol, rtol=1e-15, maxiter=500)
    d, gb, gl, ae = _parts(s, sigma, params)
    return BenchmarkEquilibrium(
        sigma_ratio=sigma,
        s_hat_scaled=s,
        d_hat=d,
        spread_norm=spread_norm(gb, gl, ae, params.mu, params.mu_z),
        gamma_bar_e=gb,
        gamma_low_e=gl,
        alpha_e=ae,
        residual=f(s),
        log_gamma_low_e=log_normal_cdf(-s - sigma),
    )


def _bisect(g, lo, hi, tol=1e-15, maxiter=200):
    glo = g(lo)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def limit_sstar(mu_ratio: float) -> float:
    """Cutoff as the information advantage vanishes.

    Positive fixed point of ``s = 2 phi(s) / (2 - 2 Phi(s) + mu_ratio)``.
    """
    if not (mu_ratio > 0 and math.isfinite(mu_ratio)):
        raise ValueError("mu_ratio must be positive and finite")
    phi = lambda s: math.exp(-0.5 * s * s) / math.sqrt(2 * math.pi)
    g = lambda s: s * (2.0 - 2.0 * float(ndtr(s)) + mu_ratio) - 2.0 * phi(s)
    # g(0) < 0 and g(s) ~ s mu_ratio for large s
    hi = 1.0
    while g(hi) <= 0.0:
        hi *= 2.0
    return _bisect(g, 0.0, hi)


def limit_khat(params: ModelParams) -> float:
    """Spread limit as the information advantage grows.

    Fixed point of ``k = 1 / (1 + (1 - G(k)) mu_z / mu)`` on ``(0, 1)``.
    """
    r = params.mu_ratio
    G = params.delay_cdf.cdf
    g = lambda k: k * (1.0 + (1.0 - G(k)) * r) - 1.0
    return _bisect(g, 0.0, 1.0)
