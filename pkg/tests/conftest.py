import numpy as np
import pytest

from mvrc.data import make_rng, synth_housing, synth_portfolio
from mvrc.problems import PortfolioProblem, SmoothSyntheticProblem, SpamProblem, random_linear_problem

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def central_diff(fun, x, h=1e-6):
    """Central differences of a vector (or scalar) function; returns (out_dim, d)."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def portfolio_small():
    ds = synth_portfolio(40, 5, make_rng(3, "data"), factor_scale=0.3)
    return PortfolioProblem(ds.matrix, 0.2, "l1:0.01")


@pytest.fixture
def spam_small():
    ds = synth_housing(30, 2, 3, make_rng(4, "data"), noise=0.5)
    return SpamProblem(ds.matrix, ds.targets, 1.0, 0.001)


@pytest.fixture
def linear_small():
    return random_linear_problem(make_rng(5, "data"), n=12, d=4, p=5)


@pytest.fixture
def smooth_small():
    return SmoothSyntheticProblem.random(make_rng(6, "data"), n=7, d=3, p=2)
