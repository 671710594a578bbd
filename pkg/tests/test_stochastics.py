import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkpool_eq import _kernels_py, kernels
from darkpool_eq.dualvenue import evaluate
from darkpool_eq.model import DomainError, NumericsConfig, ZLaw, paper_params
from darkpool_eq.stochastics import (
    _rule,
    execution_rates,
    execution_rates_limit,
    execution_rates_log,
    execution_rates_qmc,
    log_normal_mass,
    normal_cdf,
    normal_mass,
    normal_pdf,
    pooling_ratio,
    rate_abc,
    rates_qmc_abc,
)

Z = ZLaw(30.0, 1.0)
CFG = NumericsConfig()
frac = st.floats(0.0, 1.0)


def test_normal_basics():
    assert normal_cdf(0.0) == 0.5
    assert normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    # high-precision reference value
    assert normal_cdf(1.96) == pytest.approx(0.97500210485177956586, rel=1e-15)


@given(st.floats(-8, 8))
def test_normal_cdf_symmetry(x):
    assert normal_cdf(-x) == pytest.approx(1.0 - normal_cdf(x), abs=3e-16)


# high-precision references for log(Phi(b) - Phi(a)) at the binary inputs
@pytest.mark.parametrize("a, b, expected", [
    (-1.0, 1.0, -0.38171514630212607227),
    (-41.0, -40.0, -804.60844201375378817),
    (40.0, 41.0, -804.60844201375378817),
    (10.0, 10.0001, -60.129778865182768586),
    (0.5, 0.5000000001, -24.069789380429762008),
    (-3.0, 2.0, -0.024395187554887346058),
])
def test_log_normal_mass(a, b, expected):
    assert log_normal_mass(a, b) == pytest.approx(expected, rel=1e-12)


def test_normal_mass_edge_cases():
    assert log_normal_mass(1.0, 1.0) == -math.inf
    assert normal_mass(-math.inf, math.inf) == pytest.approx(1.0)


@given(st.floats(-30, 30), st.floats(1e-12, 5))
def test_log_normal_mass_matches_cdf_difference(a, w):
    b = a + w
    direct = normal_cdf(b) - normal_cdf(a)
    if direct > 1e-3:
        assert normal_mass(a, b) == pytest.approx(direct, rel=1e-10)


# --------------------------------------------------------------------------
# Execution rates


def test_rates_reference_example():
    # independent scrambled-Sobol estimate with 2**23 points
    rb, rl = execution_rates(0.3, 0.1, 0.2, 30.0, Z, CFG)
    assert rb == pytest.approx(0.9999968787341644, abs=5e-4)
    assert rl == pytest.approx(0.6031627875063691, abs=5e-4)


@pytest.mark.parametrize("g, ad", [(0.0, 0.5), (0.2, 0.01), (0.4, 1.0), (1e-8, 0.3)])
def test_equal_informed_masses_give_equal_rates(g, ad):
    rb, rl = execution_rates(g, g, ad, 30.0, Z, CFG)
    assert rb == pytest.approx(rl, abs=1e-12)


def test_liquidity_only_pool_is_pooling_ratio():
    rb, rl = execution_rates(0.0, 0.0, 0.4, 30.0, Z, CFG)
    assert rb == pytest.approx(pooling_ratio(Z), abs=1e-12)
    assert rl == pytest.approx(rb, abs=1e-12)


@pytest.mark.parametrize("gb, gl, expected", [
    (0.3, 0.0, (1.0, 0.0)),
    (0.3, 0.1, (1.0, 1 / 3)),
    (0.1, 0.3, (1 / 3, 1.0)),
])
def test_no_liquidity_is_deterministic(gb, gl, expected):
    assert execution_rates(gb, gl, 0.0, 30.0, Z, CFG) == pytest.approx(expected)


def test_empty_pool_is_an_error():
    with pytest.raises(DomainError):
        execution_rates(0.0, 0.0, 0.0, 30.0, Z, CFG)
    with pytest.raises(DomainError):
        rate_abc(-1.0, 0.0, 1.0, Z, CFG)


@given(frac, frac, st.floats(1e-3, 1.0))
@settings(max_examples=40, deadline=None)
def test_swap_symmetry_and_bounds(gb, gl, ad):
    rb, rl = execution_rates(gb, gl, ad, 30.0, Z, CFG)
    sb, sl = execution_rates(gl, gb, ad, 30.0, Z, CFG)
    assert 0.0 <= rl <= 1.0 and 0.0 <= rb <= 1.0
    assert (rb, rl) == pytest.approx((sl, sb), abs=1e-12)
    if gb >= gl:
        assert rl <= rb + 1e-12


def test_rates_monotone_in_informed_imbalance():
    total, ad = 0.4, 0.2
    gaps = np.linspace(0.0, total, 9)
    rates = np.array([execution_rates((total + g) / 2, (total - g) / 2, ad, 30.0, Z, CFG)
                      for g in gaps])
    assert np.all(np.diff(rates[:, 0]) >= -1e-14)
    assert np.all(np.diff(rates[:, 1]) <= 1e-14)


@pytest.mark.parametrize("shape", [0.5, 2.0, 30.0, 400.0])
def test_quadrature_agrees_with_qmc_across_shapes(shape):
    z = ZLaw(shape, 1.0)
    rb, rl = execution_rates(0.2, 0.05, 0.01, 30.0, z, CFG)
    qb, ql, se = execution_rates_qmc(0.2, 0.05, 0.01, 30.0, z, CFG)
    assert abs(rb - qb) <= 3 * (CFG.tol_expect + se)
    assert abs(rl - ql) <= 3 * (CFG.tol_expect + se)


def test_log_inputs_survive_underflow():
    est = execution_rates_log(-1000.0, -1001.0, -1000.5, Z, CFG)
    ref = rate_abc(1.0, math.exp(-1.0), math.exp(-0.5), Z, CFG)
    assert est.as_tuple() == pytest.approx(ref.as_tuple(), abs=1e-14)
    with pytest.raises(DomainError):
        execution_rates_log(-math.inf, -math.inf, -math.inf, Z, CFG)


def test_qmc_is_reproducible_and_seeded():
    a = rates_qmc_abc(0.5, 0.2, 0.3, Z, CFG, n_points=2**14)
    b = rates_qmc_abc(0.5, 0.2, 0.3, Z, CFG, n_points=2**14)
    c = rates_qmc_abc(0.5, 0.2, 0.3, Z, CFG, n_points=2**14, seed=1)
    assert a == b
    assert a.r_bar != c.r_bar
    assert a.method == "qmc" and a.error > 0


def test_qmc_no_liquidity_closed_form():
    assert execution_rates_qmc(0.3, 0.1, 0.0, 30.0, Z) == (1.0, 1 / 3, 0.0)


# --------------------------------------------------------------------------
# Diagonal limit


@pytest.mark.parametrize("s0, sigma", [(0.0, 1.0), (0.5, 0.0)])
def test_limit_convention(s0, sigma):
    assert execution_rates_limit(s0, sigma, paper_params()) == (1.0, 1.0)


def test_limit_negative_inputs():
    with pytest.raises(DomainError):
        execution_rates_limit(-0.1, 1.0, paper_params())


@pytest.mark.parametrize("s0", [0.2, 0.5, 1.5])
def test_limit_matches_nearby_interior(s0):
    p = paper_params()
    lim = execution_rates_limit(s0, 1.0, p)
    pt = evaluate(s0, s0 + 1e-6, p)
    assert lim == pytest.approx((pt.r_bar, pt.r_low), abs=1e-4)


# --------------------------------------------------------------------------
# Kernel backends


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")


@given(frac, frac, st.floats(1e-3, 1.0))
@settings(max_examples=30, deadline=None)
def test_backends_agree(a, b, c):
    pytest.importorskip("darkpool_eq._kernels")
    from darkpool_eq import _kernels
    m = max(a, b, c)
    rule = _rule(30.0, 128)
    x = _kernels_py.rate(a / m, b / m, c / m, 30.0, *rule)
    y = _kernels.rate(a / m, b / m, c / m, 30.0, *rule)
    assert x[0] == pytest.approx(y[0], abs=1e-13)


def test_kernel_error_estimate_is_small():
    rule = _rule(30.0, 128)
    val, err = kernels.rate(0.3, 0.1, 0.2, 30.0, *rule)
    assert 0 <= val <= 1
    assert err < 1e-10


def test_pure_fallback_selected_by_environment():
    import os
    import subprocess
    import sys
    env = dict(os.environ, DARKPOOL_EQ_PURE="1")
    out = subprocess.run([sys.executable, "-c",
                          "from darkpool_eq import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
