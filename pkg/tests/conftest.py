import warnings

import numpy as np
import pytest

from causal_anomaly.graph import Dag


@pytest.fixture
def chain3():
    return Dag.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def collider():
    return Dag.from_edges(3, [(0, 2), (1, 2)])


@pytest.fixture(autouse=True)
def _quiet_prior_support():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="value.? outside")
        yield


def chain_data(n, seed, d=3, noise=0.1):
    """Smooth nonlinear chain ``0 -> 1 -> ... -> d-1``."""
    rng = np.random.default_rng(seed)
    x = np.zeros((n, d))
    x[:, 0] = rng.normal(0, 1, n)
    for j in range(1, d):
        x[:, j] = np.sin(x[:, j - 1]) + 0.5 * x[:, j - 1] + noise * rng.normal(size=n)
    return x


ACCEPTANCE_RESULTS = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
