import numpy as np
import pytest

from imexbdf2.mesh import R_MAX, TimeMesh


def random_a1_mesh(rng: np.random.Generator, N: int, T: float = 1.0) -> TimeMesh:
    """Random mesh with an arbitrary first ratio and later ratios below R_MAX."""
    ratios = np.empty(N)
    ratios[0] = 1.0
    ratios[1] = rng.uniform(0.1, 30.0)
    ratios[2:] = rng.uniform(0.2, R_MAX - 0.3, size=N - 2)
    tau = np.cumprod(ratios)
    t = np.concatenate([[0.0], np.cumsum(tau)])
    t *= T / t[-1]
    t[-1] = T
    return TimeMesh(t)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number][1])
