import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkpool_eq.benchmark import solve_benchmark
from darkpool_eq.dualvenue import solve_dual
from darkpool_eq.metrics import (
    closing_price,
    compute_metrics,
    predictive_fraction,
    rmse_from_snr,
    signal_to_noise,
    volumes,
)

# sqrt(E[4 / (e^r + 1)^2]), r ~ N(2 s^2, 4 s^2), by 40-digit adaptive quadrature
RMSE_REF = [
    (0.1, 0.99503687128459455374),
    (0.5, 0.89215790887403990296),
    (1.0, 0.67052181859106779532),
    (1.5, 0.44411991871502649194),
    (2.0, 0.26191107038599726593),
    (3.0, 0.064428873495533924534),
    (5.0, 0.00094489155086292382828),
    (8.0, 4.4130370271861819725e-8),
]


@pytest.mark.parametrize("snr, expected", RMSE_REF)
def test_rmse_reference(snr, expected):
    assert rmse_from_snr(snr) == pytest.approx(expected, rel=1e-10, abs=1e-16)


@pytest.mark.parametrize("snr, expected", [(0.0, 1.0), (math.inf, 0.0)])
def test_rmse_endpoints(snr, expected):
    assert rmse_from_snr(snr) == expected


def test_rmse_rejects_negative():
    with pytest.raises(ValueError):
        rmse_from_snr(-0.1)


def test_rmse_monte_carlo():
    rng = np.random.default_rng(5)
    s = 1.3
    r = rng.normal(2 * s * s, 2 * s, 400_000)
    mc = np.sqrt(np.mean(4 / (np.exp(r) + 1) ** 2))
    assert rmse_from_snr(s) == pytest.approx(mc, rel=5e-3)


def test_rmse_continuous_at_rule_switch():
    assert rmse_from_snr(1.0) == pytest.approx(rmse_from_snr(np.nextafter(1.0, 2.0)), rel=1e-13)


@given(st.floats(0, 10), st.floats(0, 10))
@settings(max_examples=50)
def test_rmse_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert rmse_from_snr(hi) <= rmse_from_snr(lo) + 1e-15


@pytest.mark.parametrize("args, expected", [
    ((0.5, 0.5, 0.8, 30.0, 7.0), 0.0),
    ((0.8, 0.1, 0.5, 30.0, math.sqrt(60.0)), 0.7 * 30 / (0.5 * math.sqrt(60.0))),
    ((0.8, 0.1, 0.0, 30.0, 7.0), math.inf),
])
def test_signal_to_noise(args, expected):
    assert signal_to_noise(*args) == pytest.approx(expected)


def test_signal_to_noise_rejects_zero_noise():
    with pytest.raises(ValueError):
        signal_to_noise(0.5, 0.1, 0.5, 30.0, 0.0)


@given(st.floats(-50, 50), st.floats(0.1, 10))
def test_closing_price(r, sigma_v):
    p = closing_price(r, sigma_v)
    direct = (math.exp(r) - 1) / (math.exp(r) + 1) * sigma_v if abs(r) < 30 else None
    assert -sigma_v <= p <= sigma_v
    assert closing_price(-r, sigma_v) == pytest.approx(-p)
    if direct is not None:
        assert p == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_closing_price_vectorized():
    out = closing_price(np.array([-1.0, 0.0, 1.0]), 2.0)
    assert out.shape == (3,) and out[1] == 0.0


@pytest.fixture(scope="module")
def pair(params):
    return solve_benchmark(params), solve_dual(params)


def test_benchmark_volumes(pair, params):
    b, _ = pair
    vol = volumes(b, params)
    assert vol["v_dark"] == 0.0
    # every liquidity trader reaches the exchange in one of the two periods
    assert vol["v_exchange"] == pytest.approx((b.gamma_bar_e + b.gamma_low_e) * params.mu
                                              + params.mu_z)
    m = compute_metrics(b, params)
    assert math.isnan(m.predictive_fraction)
    assert "predictive-fraction-undefined" in m.flags
    assert m.dark_market_share == 0.0


def test_dual_volumes(pair, params):
    _, d = pair
    vol = volumes(d, params)
    fill = 0.5 * (d.r_bar + d.r_low)
    assert vol["v_dark"] == pytest.approx((d.r_bar * d.gamma_low_d + d.r_low * d.gamma_bar_d)
                                          * params.mu + fill * d.alpha_d * params.mu_z)
    assert vol["v_total"] == pytest.approx(vol["v_dark"] + vol["v_exchange"])
    assert vol["v_dark_uninformed"] + vol["v_dark_informed"] == pytest.approx(vol["v_dark"])
    # liquidity conservation: dark fills plus exchange liquidity equal mu_z
    liq_ex = vol["v_exchange"] - (d.gamma_bar_e + d.gamma_low_e) * params.mu
    assert liq_ex + fill * d.alpha_d * params.mu_z == pytest.approx(params.mu_z)


def test_dual_metrics(pair, params):
    b, d = pair
    m = compute_metrics(d, params)
    assert 0.5 < m.predictive_fraction < 0.51
    assert m.adverse_selection_norm == pytest.approx(d.r_bar - d.r_low)
    assert m.nonexec_prob == pytest.approx(1 - 0.5 * (d.r_bar + d.r_low))
    assert 0 < m.dark_market_share < 1
    assert m.rmse == pytest.approx(rmse_from_snr(m.signal_to_noise))
    assert m.to_dict()["flags"] == list(m.flags)
    assert compute_metrics(b, params).signal_to_noise > m.signal_to_noise


def test_predictive_fraction_empty_pool(pair, params):
    _, d = pair
    empty = dataclasses.replace(d, gamma_bar_d=0.0, gamma_low_d=0.0, alpha_d=0.0)
    assert math.isnan(predictive_fraction(empty, params))


def test_degenerate_snr_flag(pair, params):
    _, d = pair
    no_liq = dataclasses.replace(d, alpha_e=0.0)
    m = compute_metrics(no_liq, params)
    assert math.isinf(m.signal_to_noise)
    assert m.rmse == 0.0
    assert "snr-degenerate" in m.flags
