"""Acceptance suite: one test per criterion, one summary line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL table is
printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, SIGMA_GRID
from darkpool_eq import analysis
from darkpool_eq.benchmark import limit_sstar, solve_benchmark
from darkpool_eq.dualvenue import solve_dual, verify_equilibrium
from darkpool_eq.metrics import compute_metrics
from darkpool_eq.model import NumericsConfig, ZLaw, market_maker_profit, paper_params
from darkpool_eq.simulator import SimulationConfig, simulate, validate
from darkpool_eq.stochastics import execution_rates, execution_rates_qmc


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def _duals(sweep):
    return [pt.dual for pt in sweep.points]


def _benches(sweep):
    return [pt.benchmark for pt in sweep.points]


# 1 --------------------------------------------------------------------------

def test_criterion_1_existence_and_sorting(params):
    t = time.perf_counter()
    res = analysis.sweep(analysis.SweepSpec(
        "sigma_ratio_log", tuple(math.log(s) for s in SIGMA_GRID), params, ("dual",)))
    elapsed = time.perf_counter() - t
    bad = [pt.value for pt in res.points if pt.errors]
    eqs = [pt.dual for pt in res.points if not pt.errors]
    sorted_ok = all(0 < e.s0_scaled < e.s1_scaled for e in eqs)
    resid = max(e.residual_max for e in eqs)
    ok = not bad and sorted_ok and resid < 1e-9 and elapsed < 60
    record(1, ok, f"{len(eqs)}/41 solved, max residual {resid:.1e}, {elapsed:.1f} s")
    assert not bad
    assert sorted_ok
    assert resid < 1e-9
    assert elapsed < 60


# 2 --------------------------------------------------------------------------

def _corollary_violations(b, d):
    checks = {
        "gamma_e order": d.gamma_bar_e > d.gamma_low_e,
        "gamma_low_e > 0": math.isfinite(d.log_gamma_low_e),
        "gamma_d order": d.log_gamma_bar_d > d.log_gamma_low_d,
        "gamma_low_d > 0": math.isfinite(d.log_gamma_low_d),
        "r order": d.r_bar > d.r_low,
        "alpha_d > 0": math.isfinite(d.log_alpha_d),
        "s1 > s_hat": d.s1_scaled > b.s_hat_scaled,
        "alpha_e falls": d.alpha_e < b.alpha_e,
        "informed gap falls": (d.gamma_bar_e - d.gamma_low_e)
                              < (b.gamma_bar_e - b.gamma_low_e),
    }
    return [k for k, ok in checks.items() if not ok]


def test_criterion_2_corollaries(sigma_sweep):
    viol = {}
    for pt in sigma_sweep.points:
        v = _corollary_violations(pt.benchmark, pt.dual)
        if v:
            viol[pt.value] = v
    record(2, not viol, f"{sum(map(len, viol.values()))} violations over 41 points x 9 checks")
    assert not viol


# 3 --------------------------------------------------------------------------

def test_criterion_3_limits():
    k_hat = (9.0 - math.sqrt(57.0)) / 4.0
    far = solve_benchmark(paper_params(sigma_v=1e3))
    near_p = paper_params(sigma_v=1e-3)
    near = solve_benchmark(near_p)
    dual_near = solve_dual(near_p)
    e1 = abs(far.spread_norm - k_hat)
    e2 = abs(near.s_hat_scaled - limit_sstar(2.0))
    e3 = dual_near.spread_norm
    ok = e1 < 1e-2 and e2 < 1e-2 and e3 < 1e-2
    record(3, ok, f"|A/sv - k_hat| {e1:.1e}, |s_hat - s*| {e2:.1e}, dual spread {e3:.1e}")
    assert e1 < 1e-2
    assert e2 < 1e-2
    assert e3 < 1e-2


# 4 --------------------------------------------------------------------------

def test_criterion_4_amplification(params, sigma_sweep):
    snr_b = sigma_sweep.column("benchmark", "snr")
    snr_d = sigma_sweep.column("dual", "snr")
    rmse_b = sigma_sweep.column("benchmark", "rmse")
    rmse_d = sigma_sweep.column("dual", "rmse")
    gap = snr_b - snr_d
    pos = gap > 0
    changes = int(np.sum(pos[1:] != pos[:-1]))
    order_ok = bool(pos[0] and not pos[-1] and changes == 1)
    mirror = bool(np.all(np.sign(rmse_d - rmse_b) == np.sign(gap)))
    r = analysis.threshold_sigma_bar(1.0, params)
    lo, hi = r.bracket
    width = (hi - lo) / lo
    i = int(np.argmin(pos))
    inside = SIGMA_GRID[i - 1] < r.sigma_bar < SIGMA_GRID[i]
    ok = order_ok and mirror and width <= 1e-6 and inside
    record(4, ok, f"{changes} sign change, sigma_bar {r.sigma_bar:.9g}, "
                  f"bracket width {width:.1e}, RMSE mirrors SNR: {mirror}")
    assert order_ok
    assert mirror
    assert width <= 1e-6
    assert inside


# 5 --------------------------------------------------------------------------

SCALED_FIELDS = ("s0_scaled", "s1_scaled", "d0", "d1", "spread_norm", "r_bar", "r_low",
                 "gamma_bar_e", "gamma_low_e", "gamma_bar_d", "gamma_low_d",
                 "alpha_e", "alpha_d")
BENCH_FIELDS = ("s_hat_scaled", "d_hat", "spread_norm", "gamma_bar_e", "gamma_low_e",
                "alpha_e")


def _gap_raw(sigma_v, sigma_e):
    cmp = analysis.compare_models(paper_params(sigma_v=sigma_v, sigma_e=sigma_e))
    return cmp.snr_bench - cmp.snr_dual


def test_criterion_5_scale_invariance(params):
    p1, p7 = paper_params(1.0, 1.0), paper_params(7.0, 7.0)
    d1, d7 = solve_dual(p1), solve_dual(p7)
    b1, b7 = solve_benchmark(p1), solve_benchmark(p7)
    diffs = [abs(getattr(d1, f) - getattr(d7, f)) for f in SCALED_FIELDS]
    diffs += [abs(getattr(b1, f) - getattr(b7, f)) for f in BENCH_FIELDS]
    diffs += [abs(compute_metrics(d1, p1).rmse - compute_metrics(d7, p7).rmse)]
    field_err = max(diffs)
    t1 = analysis.threshold_sigma_bar(1.0, params)
    t2 = analysis.threshold_sigma_bar(2.0, params)
    ratio_err = abs(t2.sigma_bar_v / t1.sigma_bar_v - 2.0) / 2.0
    # the doubled threshold separates the two signs in raw units as well
    eps = 1e-5
    raw_ok = (_gap_raw(t2.sigma_bar_v * (1 - eps), 2.0) > 0
              and _gap_raw(t2.sigma_bar_v * (1 + eps), 2.0) <= 0)
    ok = field_err <= 1e-10 and ratio_err <= 1e-6 and raw_ok
    record(5, ok, f"max scaled field difference {field_err:.1e}, "
                  f"threshold ratio error {ratio_err:.1e}, raw sign check {raw_ok}")
    assert field_err <= 1e-10
    assert ratio_err <= 1e-6
    assert raw_ok


# 6 --------------------------------------------------------------------------

def test_criterion_6_verification(params, sigma_sweep, sigma_e_sweep):
    pairs = [(pt.dual, pt.params) for s in (sigma_sweep, sigma_e_sweep) for pt in s.points]
    worst, failures = 0.0, 0
    for eq, p in pairs:
        rep = verify_equilibrium(eq, p)
        assert "break_even" in rep.violations
        worst = max(worst, rep.max_violation)
        failures += not rep.ok(1e-8)
    # the exchange-only equilibria break even as well
    mm = max(abs(market_maker_profit(1.0, b.spread_norm, b.gamma_bar_e, b.gamma_low_e,
                                     b.alpha_e, params.mu, params.mu_z))
             for b in _benches(sigma_sweep))
    ok = failures == 0 and worst <= 1e-8 and mm <= 1e-8
    record(6, ok, f"{len(pairs)} equilibria, max violation {worst:.1e}, "
                  f"benchmark break-even {mm:.1e}")
    assert failures == 0
    assert mm <= 1e-8


# 7 --------------------------------------------------------------------------

def test_criterion_7_quadrature_vs_qmc():
    cfg = NumericsConfig()
    rng = np.random.default_rng(20231105)
    worst, fails = 0.0, 0
    for _ in range(100):
        gb, gl, ad = rng.uniform(0.0, 1.0, 3)
        mu = rng.uniform(1.0, 100.0)
        z = ZLaw(float(rng.choice([2.0, 5.0, 30.0, 100.0])), 1.0)
        rb, rl = execution_rates(gb, gl, ad, mu, z, cfg)
        qb, ql, se = execution_rates_qmc(gb, gl, ad, mu, z, cfg)
        bound = 3.0 * (cfg.tol_expect + se)
        d = max(abs(rb - qb), abs(rl - ql))
        worst = max(worst, d / bound)
        fails += d > bound
    record(7, fails == 0, f"{fails}/100 draws outside the bound, worst ratio {worst:.2f}")
    assert fails == 0


# 8 --------------------------------------------------------------------------

def test_criterion_8_monte_carlo(params):
    eq = solve_dual(params)
    t = time.perf_counter()
    out = simulate(eq, params, SimulationConfig(1000, 200, seed=0))
    rep = validate(out, eq, params)
    elapsed = time.perf_counter() - t
    z = {k: v for k, v in rep.zscores.items() if k != "mm_profit"}
    zmax = max(abs(v) for v in z.values())
    zp = abs(rep.zscores["mm_profit"])
    ok = rep.passed and zmax <= 4 and zp <= 3 and elapsed < 300
    name, _ = rep.worst
    record(8, ok, f"max |z| {zmax:.2f} ({name}), profit |z| {zp:.2f}, {elapsed:.1f} s")
    assert not rep.flags
    assert zmax <= 4
    assert zp <= 3
    assert elapsed < 300


# 9 --------------------------------------------------------------------------

_SHAPES: dict = {}


def _single_interior_max(y):
    st = analysis.shape_stats(y)
    return st.interior_max and st.rises_after_peak == 0 and st.falls_before_peak == 0


def _shape_result(sweep, claim):
    spread = sweep.column("dual", "spread_norm")
    if claim == "adverse_selection":
        y = sweep.column("dual", "r_bar") - sweep.column("dual", "r_low")
        return _single_interior_max(y), analysis.shape_stats(y)
    if claim == "informed_dark_gap":
        y = sweep.column("dual", "gamma_bar_d") - sweep.column("dual", "gamma_low_d")
        return _single_interior_max(y), analysis.shape_stats(y)
    col = "dark_share" if claim == "dark_share_vs_spread" else "predictive_fraction"
    st = analysis.shape_stats(sweep.column("dual", col), x=spread)
    return st.inverted_u, st


MONOTONE_REASON = ("the model gives a curve that rises monotonically; see the "
                   "decisions ledger")


@pytest.mark.parametrize("claim", [
    pytest.param("adverse_selection",
                 marks=pytest.mark.xfail(strict=True, reason=MONOTONE_REASON)),
    "informed_dark_gap",
    "dark_share_vs_spread",
    pytest.param("predictive_fraction_vs_spread",
                 marks=pytest.mark.xfail(strict=True, reason=MONOTONE_REASON)),
])
def test_criterion_9_shapes(sigma_e_sweep, claim):
    ok, st = _shape_result(sigma_e_sweep, claim)
    _SHAPES[claim] = ok
    failed = sorted(k for k, v in _SHAPES.items() if not v)
    record(9, not failed, f"{len(_SHAPES) - len(failed)}/{len(_SHAPES)} shapes reproduced"
                          + (f"; not reproduced: {', '.join(failed)}" if failed else ""))
    assert ok, st


# 10 -------------------------------------------------------------------------

def test_criterion_10_monotone_statics(params):
    grid = tuple(np.linspace(3.0, 1.5, 31))
    res = analysis.sweep(analysis.SweepSpec("sigma_e_log", grid, params, ("dual",)))
    col = lambda n: res.column("dual", n)
    series = {
        "spread_norm": (col("spread_norm"), True),
        "gamma_e gap": (col("gamma_bar_e") - col("gamma_low_e"), True),
        "gamma_d gap": (col("gamma_bar_d") - col("gamma_low_d"), True),
        "alpha_d": (col("alpha_d"), True),
        "alpha_e": (col("alpha_e"), False),
        "alpha_e + alpha_d": (col("alpha_e") + col("alpha_d"), False),
    }
    viol = {k: analysis.monotone_violations(y, inc) for k, (y, inc) in series.items()}
    # strict: a flat step counts as a violation
    flat = {k: int(np.sum(np.diff(y) == 0)) for k, (y, _) in series.items()}
    total = sum(viol.values()) + sum(flat.values())
    record(10, total == 0, f"{total} violations over {len(series)} series x 30 steps")
    assert total == 0, (viol, flat)
