import math

import numpy as np
import pytest

from darkpool_eq import analysis
from darkpool_eq.model import paper_params

# 41-point log grid of the information advantage over [1e-2, 1e2]
SIGMA_GRID = tuple(float(v) for v in np.geomspace(1e-2, 1e2, 41))

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def params():
    return paper_params()


@pytest.fixture(scope="session")
def sigma_sweep(params):
    """Both models on the reference information-advantage grid."""
    grid = tuple(math.log(s) for s in SIGMA_GRID)
    spec = analysis.SweepSpec("sigma_ratio_log", grid, params)
    return analysis.sweep(spec)


@pytest.fixture(scope="session")
def sigma_e_sweep(params):
    """Both models over log sigma_e in [-2, 2], 41 points."""
    spec = analysis.SweepSpec("sigma_e_log", tuple(np.linspace(-2.0, 2.0, 41)), params)
    return analysis.sweep(spec)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
