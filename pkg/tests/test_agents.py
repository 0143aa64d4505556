import numpy as np
import pytest

from dana.agents import Network, make_agents, outer_iteration, run_message_passing
from dana.dana_d import run_matrix_form
from dana.exceptions import LocalityBreach
from dana.graph import GraphTopology, assemble_laplacian
from dana.problem import DispatchProblem


@pytest.fixture
def path_case():
    g = GraphTopology.path(3)
    lap = assemble_laplacian(g, [0.4, 0.3])
    p = DispatchProblem([1.0, 2.0, 3.0], [0.5, -0.5, 0.0], d=6.0, x0=[3.0, 2.0, 1.0])
    return p, lap


def test_hand_simulated_iteration(path_case):
    p, lap = path_case
    alpha, q = 0.5, 1
    L = lap.matrix
    # pencil-and-paper schedule of one outer iteration
    df = p.a * p.x0 + p.b                      # [3.5, 3.5, 3.0]
    y = np.array([L[0] @ df, L[1] @ df, L[2] @ df])
    z = -y
    v = p.a * (L @ y)
    y = y - L @ v
    z = z - y
    expected = p.x0 + alpha * (L @ z)
    agents = make_agents(p, L, lap.graph)
    net = Network(lap.graph)
    rounds = outer_iteration(agents, net, alpha, q)
    np.testing.assert_allclose([ag.x for ag in agents], expected, atol=1e-14)
    assert rounds == 2 * q + 2
    assert net.round_log == ["grad", "y", "v", "step"]


@pytest.mark.parametrize("q", [0, 1, 2, 3])
def test_matches_matrix_form(designed_sinusoid, q):
    p, L = designed_sinusoid
    a = run_matrix_form(p, L, q, alpha="curvature", max_iters=25, tol=0, record_states=True)
    b = run_message_passing(p, L, q, alpha="curvature", max_iters=25, tol=0,
                            record_states=True)
    for (xa, sa), (xb, sb) in zip(a.states, b.states):
        assert np.max(np.abs(xa - xb)) <= 1e-12
        assert np.max(np.abs(sa - sb)) <= 1e-12
    assert b.info["breaches"] == []
    assert set(b.info["rounds_each"]) == {2 * q + 2}
    assert b.info["direction_rounds"] == 2 * q + 1


def test_q0_single_direction_round(designed_sinusoid):
    p, L = designed_sinusoid
    res = run_message_passing(p, L, 0, max_iters=3, tol=0)
    assert res.info["direction_rounds"] == 1
    assert res.info["network"].round_log[:2] == ["grad", "step"]


def test_locality_harness(path_case):
    p, lap = path_case
    net = Network(GraphTopology.path(4))
    assert net.read(0, 2, {2: 1.0}) == 1.0
    with pytest.raises(LocalityBreach):
        net.read(0, 3, {3: 1.0})
    lax = Network(GraphTopology.path(4), strict=False)
    lax.read(0, 3, {3: 1.0})
    assert lax.breaches == [(0, 3)]


def test_message_count(path_case):
    p, lap = path_case
    res = run_message_passing(p, lap, 2, alpha=0.1, max_iters=4, tol=0)
    assert res.info["messages"] == res.info["total_rounds"] * 2 * lap.graph.m
