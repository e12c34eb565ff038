import numpy as np
import pytest
from hypothesis import settings

from yfwl import PartitionedDesign
from yfwl.verify import instance_rng, random_instance

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_inv(a):
    return np.linalg.inv(a)


def dense_sandwich(x, omega):
    """Literal (X'X)^-1 X' Omega X (X'X)^-1 with explicit inverses."""
    g = dense_inv(x.T @ x)
    return g @ x.T @ omega @ x @ g


def dense_hat(x):
    return x @ dense_inv(x.T @ x) @ x.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def design(rng):
    return random_instance(rng, 40, 2, 3, rho=0.4, errors="hetero").design


@pytest.fixture
def instance():
    return random_instance(instance_rng(7, 0), 60, 2, 4, rho=0.5, errors="cluster", n_clusters=6)


def orthogonal_design(n=12):
    """Intercept control and a mean-zero, orthogonal-to-ones focus pair."""
    t = np.arange(n, dtype=float)
    x1 = t - t.mean()
    x2 = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    x2 = x2 - x1 * (x1 @ x2) / (x1 @ x1)
    y = 1.0 + 0.5 * x1 - 2.0 * x2 + np.sin(t)
    return PartitionedDesign(y, np.column_stack([x1, x2]), np.ones((n, 1)))
