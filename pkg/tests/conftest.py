import numpy as np
import pytest

from dana.graph import GraphTopology, random_connected
from dana.problem import random_instance, three_node_instance
from dana.weight_design import design


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return GraphTopology.path(3)


@pytest.fixture
def three_node():
    return three_node_instance()


@pytest.fixture(scope="session")
def designed_sinusoid():
    """Sinusoid instance on a random 10-node graph with its designed Laplacian."""
    g = random_connected(10, 25, seed=3)
    p = random_instance(10, "sinusoid", seed=3)
    return p, design(g, p.delta, p.Delta).L_star


@pytest.fixture(scope="session")
def designed_quadratic():
    g = random_connected(8, 16, seed=5)
    p = random_instance(8, "quadratic", seed=5)
    return p, design(g, p.delta, p.Delta).L_star


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    return _ACCEPTANCE_LINES


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
