import numpy as np
import pytest

from absaga.digraph import complete_graph, exponential_graph
from absaga.problems import FiniteSumProblem, synthetic_logistic
from absaga.weights import COLUMN, ROW, StochasticMatrix, WeightSystem

A2 = np.array([[0.75, 0.25], [0.5, 0.5]])
B2 = np.array([[0.75, 0.5], [0.25, 0.5]])

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        label = name.replace("test_", "").split("_", 1)
        crit = label[0].upper()
        what = label[1].replace("_", " ") if len(label) > 1 else ""
        verdict = "PASS" if _acceptance[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{crit:<4} {verdict}  {what}")


@pytest.fixture(scope="session")
def two_node():
    """Directed pair with pi_r = pi_c = [2/3, 1/3]."""
    return WeightSystem(StochasticMatrix(A2, ROW), StochasticMatrix(B2, COLUMN))


@pytest.fixture(scope="session")
def exp16():
    return WeightSystem.from_graph(exponential_graph(16))


@pytest.fixture(scope="session")
def complete4():
    return WeightSystem.from_graph(complete_graph(4))


@pytest.fixture(scope="session")
def logistic16():
    return synthetic_logistic(16, 100, 10, seed=1)


@pytest.fixture
def small_logistic():
    return synthetic_logistic(4, 5, 3, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def quadratic(targets):
    """Quadratic problem from a nested list of per-node target vectors."""
    return FiniteSumProblem.quadratic([np.asarray(t, float).reshape(len(t), -1) for t in targets])
