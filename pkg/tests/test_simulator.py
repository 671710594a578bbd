import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkpool_eq.benchmark import solve_benchmark
from darkpool_eq.dualvenue import solve_dual
from darkpool_eq.simulator import (
    RECORD_FIELDS,
    SimulationConfig,
    _count,
    simulate,
    validate,
)


@pytest.fixture(scope="module")
def dual(params):
    return solve_dual(params)


@pytest.fixture(scope="module")
def run(dual, params):
    return simulate(dual, params, SimulationConfig(1000, 200, seed=3))


@pytest.mark.parametrize("kw", [
    {"agents_per_unit_mass": 0}, {"replications": 0},
    {"replications": 3, "antithetic": True},
])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SimulationConfig(**kw)


@given(st.floats(0, 100), st.integers(1, 1000))
@settings(max_examples=50)
def test_count_brackets_mass(mass, n):
    lo = _count(mass, n, 0.999999)
    hi = _count(mass, n, 0.0)
    assert lo == int(np.floor(mass * n))
    assert hi - lo in (0, 1)


def test_count_is_unbiased():
    u = np.random.default_rng(0).random(20000)
    assert np.mean([_count(0.37, 10, x) for x in u]) == pytest.approx(3.7, abs=0.02)


def test_records(run):
    assert set(run.records) == set(RECORD_FIELDS)
    assert run.replications == 200
    rec = run.records
    assert np.all(rec["balanced"] == 1.0)
    assert np.all(rec["conserved"] == 1.0)
    assert np.all(np.abs(rec["v"]) == 1.0)
    # the pool clears: executed buys equal executed sells
    assert np.array_equal(rec["dark_exec_buy"], rec["dark_exec_sell"])
    assert np.all((rec["fill_right"] >= 0) & (rec["fill_right"] <= 1))


def test_validation_passes(run, dual, params):
    rep = validate(run, dual, params)
    assert rep.passed, rep.summary()
    assert not rep.flags
    assert set(rep.zscores) >= {"gamma_bar_d", "r_bar", "predictive_fraction",
                                "r_approx_var", "mm_profit"}
    assert "passed: True" in rep.summary()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_validation_passes_across_seeds(dual, params, seed):
    out = simulate(dual, params, SimulationConfig(1000, 200, seed=seed))
    assert validate(out, dual, params).passed


def test_validation_detects_wrong_strategy(dual, params):
    wrong = dataclasses.replace(dual, s1_scaled=dual.s1_scaled * 1.1)
    out = simulate(wrong, params, SimulationConfig(1000, 200, seed=0))
    rep = validate(out, dual, params)
    assert not rep.passed
    assert abs(rep.zscores["gamma_bar_e"]) > 4


def test_small_population_is_flagged(dual, params):
    out = simulate(dual, params, SimulationConfig(10, 40, seed=0))
    rep = validate(out, dual, params)
    assert not rep.passed
    assert any(f.startswith("high-variance") for f in rep.flags)


def test_few_replications_flagged(dual, params):
    out = simulate(dual, params, SimulationConfig(1000, 10, seed=0))
    assert any(f.startswith("too-few") for f in validate(out, dual, params).flags)


def test_reproducible(dual, params, run):
    again = simulate(dual, params, SimulationConfig(1000, 200, seed=3))
    for k in RECORD_FIELDS:
        assert np.array_equal(again.records[k], run.records[k])
    other = simulate(dual, params, SimulationConfig(1000, 200, seed=4))
    assert not np.array_equal(other.records["v"], run.records["v"])


def test_replications_independent_of_batch(dual, params, run):
    # each replication has its own stream: a prefix run reproduces the prefix
    head = simulate(dual, params, SimulationConfig(1000, 20, seed=3))
    assert np.array_equal(head.records["v_dark"], run.records["v_dark"][:20])


def test_parallel_matches_serial(dual, params):
    a = simulate(dual, params, SimulationConfig(200, 12, seed=1))
    b = simulate(dual, params, SimulationConfig(200, 12, seed=1, jobs=2))
    assert a.records_csv() == b.records_csv()


def test_antithetic_pairs(dual, params):
    out = simulate(dual, params, SimulationConfig(1000, 200, seed=0, antithetic=True))
    v = out.records["v"]
    assert np.all(v[0::2] == -v[1::2])
    assert validate(out, dual, params).passed


def test_benchmark_simulation(params):
    b = solve_benchmark(params)
    out = simulate(b, params, SimulationConfig(1000, 200, seed=0))
    assert out.model == "benchmark"
    assert np.all(out.records["v_dark"] == 0)
    rep = validate(out, b, params)
    assert rep.passed, rep.summary()
    assert "r_bar" not in rep.zscores


def test_serialization(run):
    doc = json.loads(run.to_json())
    assert doc["replications"] == 200
    assert doc["config"]["seed"] == 3
    lines = run.records_csv().splitlines()
    assert lines[0].split(",")[0] == "replication"
    assert len(lines) == 201
