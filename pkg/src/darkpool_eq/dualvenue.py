"""Dual-venue equilibrium: exchange plus a rationing dark pool.

An equilibrium is a pair of scaled cutoffs ``0 < s0 < s1``. Two
indifference conditions pin it down:

* curve 0, dark pool vs. no trade at ``s0``:
  ``B(s0) r_low - (1 - B(s0)) r_bar = 0``;
* curve 1, exchange vs. dark pool at ``s1``:
  ``B(s1) (1 - r_low) - (1 - B(s1)) (1 - r_bar) - A/sigma_v = 0``.

The solver parametrizes curve 0 by ``s1``. For each ``s1`` the curve-0
residual is nonpositive at ``s0 = 0`` and positive on the diagonal, so
``s0(s1)`` is a bracketed root. The curve-1 residual is then scanned along
``s1`` and refined where it changes sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, ndtr

from .benchmark import solve_benchmark
from .model import (InvalidEquilibriumError, ModelParams, NumericError,
                    belief, belief_complement, informed_payoffs,
                    market_maker_profit, spread_norm, uninformed_costs)
from .stochastics import (_limit_estimate, execution_rates_log, log_normal_mass,
                          pooling_ratio, rate_abc)

SCAN_POINTS = 400
BAND_POINTS = 100
BAND_HALF_WIDTH = 8.0
S1_MIN = 1e-4
S1_PAD = 50.0


class CurveEndError(NumericError):
    """Curve 0 has no point for the requested ``s0`` below ``s1_max``."""


def s1_max(sigma_ratio: float) -> float:
    """Upper end of the ``s1`` search range.

    The exchange cutoff tracks ``sigma_ratio`` for large information
    advantage, so the range grows with it.
    """
    return sigma_ratio + S1_PAD


def scan_grid(sigma_ratio: float, scan_points: int = SCAN_POINTS) -> np.ndarray:
    """Outer ``s1`` grid: log-uniform over ``[S1_MIN, s1_max]`` plus a
    uniform band around ``s1 = sigma_ratio``, where the exchange cutoff
    sits when the information advantage is large and log spacing is
    coarse."""
    top = s1_max(sigma_ratio)
    g = np.geomspace(S1_MIN, top, scan_points)
    lo = max(S1_MIN, sigma_ratio - BAND_HALF_WIDTH)
    band = np.linspace(lo, min(sigma_ratio + BAND_HALF_WIDTH, top), BAND_POINTS)
    return np.unique(np.concatenate([g, band]))


def _log_cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)


def _log_sinh(x: float) -> float:
    if x < 1.0:
        return math.log(math.sinh(x))
    return x + math.log1p(-math.exp(-2.0 * x)) - math.log(2.0)


def log_dark_liquidity(s0: float, s1: float, params: ModelParams) -> float:
    """``log alpha_d`` with ``alpha_d = G(tanh(s1 sigma)) - G(tanh(s0 sigma))``."""
    if s1 <= s0:
        return -math.inf
    sg = params.sigma_ratio
    x0, x1 = s0 * sg, s1 * sg
    # tanh(x1) - tanh(x0) = sinh(x1 - x0) / (cosh(x0) cosh(x1))
    log_gap = _log_sinh(x1 - x0) - _log_cosh(x0) - _log_cosh(x1)
    g = params.delay_cdf
    if g.family == "uniform":
        return log_gap - math.log(g.d_bar)
    m = g.mass(math.tanh(x0), math.tanh(x1), math.exp(log_gap))
    return math.log(m) if m > 0 else -math.inf


@dataclass(frozen=True)
class DualPoint:
    """Every equilibrium object implied by a candidate cutoff pair."""

    s0: float
    s1: float
    sigma_ratio: float
    d0: float
    d1: float
    gamma_bar_e: float
    gamma_low_e: float
    gamma_bar_d: float
    gamma_low_d: float
    alpha_e: float
    alpha_d: float
    log_gamma_low_e: float
    log_gamma_bar_d: float
    log_gamma_low_d: float
    log_alpha_d: float
    r_bar: float
    r_low: float
    spread_norm: float
    h0: float
    h1: float
    rate_error: float
    rate_method: str


def evaluate(s0: float, s1: float, params: ModelParams) -> DualPoint:
    """Evaluate fractions, rates, spread and both residuals at ``(s0, s1)``.

    ``s0 == s1 > 0`` uses the diagonal limit of the execution rates.
    """
    if not (0.0 <= s0 <= s1):
        raise InvalidEquilibriumError(f"need 0 <= s0 <= s1, got {(s0, s1)}")
    sg = params.sigma_ratio
    mu = params.mu
    gbe = float(ndtr(sg - s1))
    gle = float(ndtr(-s1 - sg))
    lgle = float(log_ndtr(-s1 - sg))
    lgbd = log_normal_mass(s0 - sg, s1 - sg)
    lgld = log_normal_mass(s0 + sg, s1 + sg)
    lad = log_dark_liquidity(s0, s1, params)
    d0, d1 = math.tanh(s0 * sg), math.tanh(s1 * sg)
    ae = 1.0 - float(params.delay_cdf.cdf(d1))
    if s1 > s0:
        lm = math.log(mu)
        est = execution_rates_log(lgbd + lm, lgld + lm,
                                  lad + math.log(params.z_law.scale),
                                  params.z_law, params.numerics)
    elif s0 > 0.0:
        est = _limit_estimate(s0, sg, params)
    else:
        raise InvalidEquilibriumError("s0 = s1 = 0 carries no dark-pool flow")
    rb, rl = est.r_bar, est.r_low
    A = spread_norm(gbe, gle, ae, mu, params.mu_z)
    h0 = belief(s0, sg) * rl - belief_complement(s0, sg) * rb
    h1 = belief(s1, sg) * (1.0 - rl) - belief_complement(s1, sg) * (1.0 - rb) - A
    return DualPoint(
        s0=s0, s1=s1, sigma_ratio=sg, d0=d0, d1=d1,
        gamma_bar_e=gbe, gamma_low_e=gle,
        gamma_bar_d=math.exp(lgbd), gamma_low_d=math.exp(lgld),
        alpha_e=ae, alpha_d=math.exp(lad),
        log_gamma_low_e=lgle, log_gamma_bar_d=lgbd, log_gamma_low_d=lgld,
        log_alpha_d=lad, r_bar=rb, r_low=rl, spread_norm=A, h0=h0, h1=h1,
        rate_error=est.error, rate_method=est.method,
    )


# --------------------------------------------------------------------------
# Curve 0


_SCAN_FRACTIONS = np.geomspace(1e-9, 1.0, 37)


def curve0_s0(s1: float, params: ModelParams, guess: float | None = None,
              rtol: float = 1e-15):
    """``s0`` on curve 0 for a given ``s1``.

    The curve-0 residual is nonpositive at ``s0 = 0``; the returned root is
    its first crossing to positive values on ``(0, s1]``. ``guess`` (for
    instance the root at a nearby ``s1``) starts a local bracket search
    before the full scan.

    Returns
    -------
    float or None
        ``None`` when the residual never turns positive (no curve-0 point
        at this ``s1``) and ``0.0`` when it is not negative at ``s0 = 0``
        within float resolution.
    """
    h = lambda x: evaluate(x, s1, params).h0
    h_zero = h(0.0)
    if not h_zero < 0.0:
        return 0.0
    bracket = None
    if guess is not None and 0.0 < guess < s1:
        bracket = _local_bracket(h, guess, s1)
    if bracket is None:
        lo, hlo = 0.0, h_zero
        for x in s1 * _SCAN_FRACTIONS:
            hx = h(float(x))
            if hx > 0.0:
                bracket = (lo, float(x))
                break
            lo, hlo = float(x), hx
    if bracket is None:
        return None
    return brentq(h, bracket[0], bracket[1], xtol=1e-300, rtol=rtol, maxiter=300)


def _local_bracket(h, x, cap, factor=1.25, steps=12):
    hx = h(x)
    if hx > 0.0:
        hi = x
        for _ in range(steps):
            lo = hi / factor
            if h(lo) <= 0.0:
                return lo, hi
            hi = lo
        return None
    lo = x
    for _ in range(steps):
        hi = min(lo * factor, cap)
        if h(hi) > 0.0:
            return lo, hi
        if hi == cap:
            return None
        lo = hi
    return None


def curve0_s1(s0_scaled: float, params: ModelParams, s1_cap: float | None = None) -> float:
    """``s1`` on curve 0 for a given ``s0``: the first ``s1 > s0`` at which a
    dark-pool order at ``s0`` is worth exactly nothing.

    Raises
    ------
    CurveEndError
        No sign change below ``s1_max``; ``s0`` lies beyond the curve end.
    """
    if not s0_scaled > 0.0:
        raise InvalidEquilibriumError("s0 must be positive")
    cap = s1_cap if s1_cap is not None else s1_max(params.sigma_ratio)
    gaps = np.concatenate([np.geomspace(1e-10, 1.0, 61)[:-1],
                           np.linspace(1.0, max(cap - s0_scaled, 1.0), 200)])
    f = lambda s1: evaluate(s0_scaled, s1, params).h0
    prev_s1, prev_h = s0_scaled, evaluate(s0_scaled, s0_scaled, params).h0
    trace = [(prev_s1, prev_h)]
    for gap in gaps:
        s1 = s0_scaled + gap
        h = f(s1)
        trace.append((s1, h))
        if prev_h > 0.0 >= h:
            if h == 0.0:
                return s1
            return brentq(f, prev_s1, s1, xtol=1e-300, rtol=1e-15, maxiter=300)
        prev_s1, prev_h = s1, h
    raise CurveEndError(f"no curve-0 point for s0={s0_scaled} below s1={cap}", trace=trace)


# --------------------------------------------------------------------------
# Equilibrium


@dataclass(frozen=True)
class DualVenueEquilibrium:
    sigma_ratio: float
    s0_scaled: float
    s1_scaled: float
    d0: float
    d1: float
    spread_norm: float
    r_bar: float
    r_low: float
    gamma_bar_e: float
    gamma_low_e: float
    gamma_bar_d: float
    gamma_low_d: float
    alpha_e: float
    alpha_d: float
    residuals: tuple
    log_gamma_low_e: float
    log_gamma_bar_d: float
    log_gamma_low_d: float
    log_alpha_d: float
    multiple: bool = False
    alternatives: tuple = ()
    rate_method: str = "quadrature"

    model = "dual"

    @classmethod
    def from_point(cls, p: DualPoint, **kw) -> "DualVenueEquilibrium":
        return cls(
            sigma_ratio=p.sigma_ratio, s0_scaled=p.s0, s1_scaled=p.s1,
            d0=p.d0, d1=p.d1, spread_norm=p.spread_norm, r_bar=p.r_bar,
            r_low=p.r_low, gamma_bar_e=p.gamma_bar_e, gamma_low_e=p.gamma_low_e,
            gamma_bar_d=p.gamma_bar_d, gamma_low_d=p.gamma_low_d,
            alpha_e=p.alpha_e, alpha_d=p.alpha_d, residuals=(p.h0, p.h1),
            log_gamma_low_e=p.log_gamma_low_e, log_gamma_bar_d=p.log_gamma_bar_d,
            log_gamma_low_d=p.log_gamma_low_d, log_alpha_d=p.log_alpha_d,
            rate_method=p.rate_method, **kw,
        )

    @property
    def cutoffs(self):
        return self.s0_scaled, self.s1_scaled

    @property
    def residual_max(self) -> float:
        return max(abs(r) for r in self.residuals)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residuals"] = list(self.residuals)
        d["alternatives"] = [list(a) for a in self.alternatives]
        d["model"] = self.model
        return d


def equilibrium_to_json(eq, params: ModelParams) -> str:
    doc = eq.to_dict()
    doc["params"] = params.to_config()
    doc["params_hash"] = params.digest()
    doc["residual_max"] = (eq.residual_max if hasattr(eq, "residual_max")
                           else abs(eq.residual))
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)


def equilibrium_from_json(text: str) -> DualVenueEquilibrium:
    doc = json.loads(text)
    if doc.get("model") != "dual":
        raise ValueError("not a dual-venue equilibrium document")
    names = DualVenueEquilibrium.__dataclass_fields__
    kw = {k: v for k, v in doc.items() if k in names}
    kw["residuals"] = tuple(kw["residuals"])
    kw["alternatives"] = tuple(tuple(a) for a in kw.get("alternatives", ()))
    return DualVenueEquilibrium(**kw)


def _curve1_along(s1: float, params: ModelParams, guess=None, rtol=1e-15):
    """``(s0, h1)`` on curve 0 at ``s1``; ``h1`` is evaluated at the
    ``s0 -> 0`` limit where curve 0 hugs the axis and is NaN where curve 0
    has no point."""
    s0 = curve0_s0(s1, params, guess, rtol)
    if s0 is None:
        return None, math.nan
    return s0, evaluate(s0, s1, params).h1


def solve_dual(params: ModelParams, scan_points: int = SCAN_POINTS) -> DualVenueEquilibrium:
    """Solve the dual-venue equilibrium.

    Curve 0 is traced on the ``s1`` grid of :func:`scan_grid`, each point
    warm-started from its predecessor.
    Every sign change of the curve-1 residual along it is refined; the
    first one from the origin is returned and any others are listed in
    ``alternatives`` with ``multiple`` set.

    Raises
    ------
    NumericError
        No sign change of the curve-1 residual; ``trace`` holds the scan.
    """
    grid = scan_grid(params.sigma_ratio, scan_points)
    trace = []
    prev = None
    guess = None
    brackets = []
    for s1 in map(float, grid):
        s0, h1 = _curve1_along(s1, params, guess, rtol=1e-10)
        trace.append((s1, s0, h1))
        guess = s0 if s0 else None
        if not math.isfinite(h1):
            prev = None
            continue
        if prev is not None and prev[1] < 0.0 <= h1:
            brackets.append((prev[0], s1, prev[2]))
        prev = (s1, h1, s0)
    if not brackets:
        raise NumericError("curve-1 residual never changes sign along curve 0",
                           trace=trace)
    roots = []
    for lo, hi, g0 in brackets:
        g = lambda x: _curve1_along(x, params, g0 or None)[1]
        s1 = brentq(g, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=300)
        s0 = curve0_s0(s1, params, g0 or None)
        if s0:
            roots.append((s0, s1))
    if not roots:
        raise NumericError("curve-1 crossings lie where curve 0 hugs s0 = 0",
                           trace=trace)
    s0, s1 = roots[0]
    p = evaluate(s0, s1, params)
    return DualVenueEquilibrium.from_point(
        p, multiple=len(roots) > 1, alternatives=tuple(roots[1:]))


# --------------------------------------------------------------------------
# Verification


@dataclass
class VerificationReport:
    violations: dict = field(default_factory=dict)
    ordering_ok: bool = True
    positivity_ok: bool = True
    messages: list = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        return max(self.violations.values()) if self.violations else 0.0

    def ok(self, tol: float = 1e-8) -> bool:
        return self.ordering_ok and self.positivity_ok and self.max_violation <= tol


def verify_equilibrium(eq: DualVenueEquilibrium, params: ModelParams,
                       n_draws: int = 50, seed: int = 0) -> VerificationReport:
    """Recompute every equilibrium identity and report the largest
    violation of each; violations are data, never exceptions."""
    rep = VerificationReport()
    s0, s1 = eq.s0_scaled, eq.s1_scaled
    if not (0.0 < s0 < s1):
        rep.ordering_ok = False
        rep.messages.append(f"cutoff ordering violated: s0={s0}, s1={s1}")
        s0, s1 = sorted((abs(s0), abs(s1)))
    if s1 <= s0:
        rep.violations["ordering"] = math.inf
        return rep
    p = evaluate(s0, s1, params)
    v = rep.violations
    v["d0"] = abs(eq.d0 - p.d0)
    v["d1"] = abs(eq.d1 - p.d1)
    for name in ("gamma_bar_e", "gamma_low_e", "gamma_bar_d", "gamma_low_d",
                 "alpha_e", "alpha_d", "r_bar", "r_low"):
        v[name] = abs(getattr(eq, name) - getattr(p, name))
    sg = params.sigma_ratio
    B0, C0 = belief(s0, sg), belief_complement(s0, sg)
    B1, C1 = belief(s1, sg), belief_complement(s1, sg)
    rb, rl, A = eq.r_bar, eq.r_low, eq.spread_norm
    v["curve0"] = abs(B0 * rl - C0 * rb)
    v["curve1"] = abs(B1 * (1.0 - rl) - C1 * (1.0 - rb) - A)
    v["spread"] = abs(A - spread_norm(eq.gamma_bar_e, eq.gamma_low_e, eq.alpha_e,
                                      params.mu, params.mu_z))
    v["break_even"] = abs(market_maker_profit(
        params.sigma_v, A * params.sigma_v, eq.gamma_bar_e, eq.gamma_low_e,
        eq.alpha_e, params.mu, params.mu_z))
    # uninformed thresholds from the indifference conditions
    v["d0_uninformed"] = abs(eq.d0 * 0.5 * (rb + rl) - 0.5 * (rb - rl))
    v["d1_uninformed"] = abs(A - 0.5 * (rb - rl) - (1.0 - 0.5 * (rb + rl)) * eq.d1)
    # no profitable deviation at random signals and delay costs
    rng = np.random.default_rng(seed)
    worst = 0.0
    for s in rng.uniform(0.0, 2.0 * s1 + 1.0, n_draws):
        b = belief(s, sg)
        ex, dk, nt = informed_payoffs(b, A, rb, rl)
        chosen = ex if s >= s1 else (dk if s >= s0 else nt)
        worst = max(worst, max(ex, dk, nt) - chosen)
    for d in rng.uniform(0.0, params.delay_cdf.d_bar, n_draws):
        ex, dk, dl = uninformed_costs(d, A, rb, rl)
        chosen = ex if d >= eq.d1 else (dk if d >= eq.d0 else dl)
        worst = max(worst, max(ex, dk, dl) - chosen)
    v["optimality"] = worst
    # corollary signs, compared in logs where fractions underflow
    checks = {
        "gamma_e": eq.gamma_bar_e > 0 and eq.log_gamma_low_e > -math.inf
                   and math.log(eq.gamma_bar_e) > eq.log_gamma_low_e,
        "gamma_d": eq.log_gamma_bar_d > eq.log_gamma_low_d > -math.inf,
        "rates": eq.r_bar > eq.r_low,
        "alpha_d": eq.log_alpha_d > -math.inf,
    }
    for k, ok in checks.items():
        if not ok:
            rep.positivity_ok = False
            rep.messages.append(f"sign condition failed: {k}")
    return rep


# --------------------------------------------------------------------------
# Large information advantage


@dataclass
class LimitReport:
    pooling_ratio: float
    k_hat: float
    regime_i_consistent: bool
    regime_ii_consistent: bool
    k1: float | None = None
    k2: float | None = None
    k3: float | None = None
    spread_norm: float | None = None
    r_bar: float | None = None
    r_low: float | None = None
    alpha_e: float | None = None
    alpha_d: float | None = None
    side_condition: bool = False
    side_condition_rhs: float = math.nan
    regime: str = "none"

    def to_dict(self) -> dict:
        return asdict(self)


def _bisect(g, lo, hi, tol=1e-14, maxiter=200):
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


def dual_limits_large_sigma(params: ModelParams) -> LimitReport:
    """Limits of the dual-venue equilibrium as ``sigma_ratio -> inf``.

    Regime (i) keeps ``s1 sigma`` bounded and gives the spread through
    ``k1``; regime (ii) sends ``s1 sigma`` to infinity with the coupled
    ``(k2, k3)`` system. Both are solved when their consistency condition
    holds. The informed dark mass enters the rationing ratio as
    ``k3 mu``, in the same units as the liquidity mass.
    """
    from .benchmark import limit_khat

    cfg = params.numerics
    G = params.delay_cdf.cdf
    r = params.mu_ratio
    R = pooling_ratio(params.z_law, cfg)
    kh = limit_khat(params)
    g1 = float(G(1.0))
    rep = LimitReport(
        pooling_ratio=R, k_hat=kh,
        regime_i_consistent=1.0 + (1.0 - g1) * r > 1.0 / (1.0 - R),
        regime_ii_consistent=1.0 + (1.0 - g1) * r <= 1.0 / (1.0 - R),
    )
    G_kh = float(G(kh))
    rep.side_condition_rhs = R / (1.0 - R) / (1.0 - G_kh)
    rep.side_condition = r >= rep.side_condition_rhs
    if rep.regime_i_consistent:
        f = lambda k: (1.0 - R) * k * (1.0 + (1.0 - float(G(k))) * r) - 1.0
        k1 = _bisect(f, 0.0, 1.0)
        rep.k1 = k1
        rep.alpha_e = 1.0 - float(G(k1))
        rep.alpha_d = float(G(k1))
        rep.spread_norm = 1.0 / (1.0 + rep.alpha_e * r)
        rep.r_bar = rep.r_low = R
        rep.regime = "i"
    if rep.regime_ii_consistent:
        u = (1.0 - g1) * r

        def rates(k2, k3):
            ad = g1 - float(G(2.0 * k2 - 1.0))
            return rate_abc(k3 * params.mu, 0.0, ad * params.z_law.scale,
                            params.z_law, cfg).as_tuple()

        def k3_of(k2):
            # LHS increases and RHS decreases in k3
            h = lambda k3: u / (1.0 - k3 + u) - rates(k2, k3)[1]
            return _bisect(h, 0.0, 1.0 - 1e-15)

        def eq1(k2):
            k3 = k3_of(k2)
            rb, rl = rates(k2, k3)
            return k2 - rb / (rb + rl)

        k2 = _bisect(eq1, 0.5, 1.0 - 1e-12, tol=1e-13)
        k3 = k3_of(k2)
        rep.k2, rep.k3 = k2, k3
        L = u / (1.0 - k3 + u)
        rep.spread_norm = (1.0 - k3) / (1.0 - k3 + u)
        rep.r_low = L
        rep.r_bar = k2 / (1.0 - k2) * L
        rep.alpha_e = 1.0 - g1
        rep.alpha_d = g1 - float(G(2.0 * k2 - 1.0))
        rep.regime = "ii" if rep.regime == "none" else "both"
    return rep


def compare_with_benchmark(params: ModelParams):
    """Convenience pair ``(benchmark, dual)`` at the same parameters."""
    return solve_benchmark(params), solve_dual(params)
