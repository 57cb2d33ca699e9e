import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cmsnb.model import ModelSpec, PanelData, ParamVector, StateSpace  # noqa: E402


def small_instance(N=2, T=4, seed=0, model=ModelSpec(), spat=0.8, W=None):
    """A tiny coupled panel with moderate counts and random parameters."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(N, T, 1))
    z = rng.normal(size=(N, T, 1))
    y = rng.poisson(3.0, size=(N, T))
    y[0, 1] = 0
    if W is None:
        W = np.ones((N, N)) - np.eye(N)
    data = PanelData(y, x, z, W, x_names=("x0",), z_names=("z0",))
    v = ParamVector.zeros(data)
    c = v.count
    c.beta0_en[:] = rng.normal(0.3, 0.2, N)
    c.beta0_ob[:] = c.beta0_en + 1.0
    c.beta_en[:] = [0.1]
    c.beta_ob[:] = [0.2]
    c.rho_en, c.rho_ob = 0.3, 0.5
    c.r_en, c.r_ob = 4.0, 9.0
    ch = v.chain
    ch.alpha0[:] = rng.normal(0, 0.7, 4)
    ch.alpha[:, 0] = rng.normal(0, 0.5, 4)
    ch.alpha_spat[:] = spat
    for k, lk in enumerate(("12", "21", "23", "33")):
        if lk not in model.spatial:
            ch.alpha_spat[k] = 0.0
    return data, v


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


DEFAULT = StateSpace()


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; printed in the summary."""
    def _report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
