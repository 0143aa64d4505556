import json

import numpy as np
import pytest
from sklearn.base import clone

from dana.exceptions import InvalidInput
from dana.graph import GraphTopology, assemble_laplacian, random_connected, unweighted_laplacian
from dana.problem import random_instance
from dana.reduction import epsilon_of, reduced_hessian
from dana.weight_design import (LaplacianDesigner, design, lmi_residuals, post_scale,
                                solve_p4, solve_p5, unweighted_design)


@pytest.mark.parametrize("backend", ["cvxpy", "projection"])
def test_p4_two_nodes(backend):
    x, em, ep, info = solve_p4(GraphTopology.complete(2), [1.0, 1.0], backend=backend)
    assert max(em, ep) <= 1e-2
    assert min(lmi_residuals(GraphTopology.complete(2), x, em, ep, [1.0, 1.0])) >= -1e-7


def test_p4_two_nodes_matches_sweep():
    # a 1-D sweep over the single weight is the oracle
    g = GraphTopology.complete(2)
    ws = np.linspace(0.01, 2, 4000)
    best = min(epsilon_of(assemble_laplacian(g, [w]), [1, 1], [1, 1]).value for w in ws)
    x, *_ = solve_p4(g, [1.0, 1.0])
    assert epsilon_of(assemble_laplacian(g, x), [1, 1], [1, 1]).value <= best + 1e-2


def test_p4_lmis_hold_on_random_graph():
    g = random_connected(8, 16, seed=2)
    p = random_instance(8, "tight", seed=2)
    x, em, ep, info = solve_p4(g, p.delta, p.Delta)
    assert np.all(x >= 0)
    assert info["lmi_min_eig"] >= -1e-7
    assert min(lmi_residuals(g, x, em, ep, p.delta, p.Delta)) >= -1e-7


def test_backends_agree():
    g = random_connected(5, 7, seed=4)
    p = random_instance(5, "tight", seed=4)
    a = design(g, p.delta, p.Delta, backend="cvxpy")
    b = design(g, p.delta, p.Delta, backend="projection")
    assert abs(a.epsilon - b.epsilon) <= 0.05


def test_uniform_costs_vertex_transitive():
    g = GraphTopology.complete(5)
    x, em, ep, _ = solve_p4(g, np.full(5, 2.0))
    np.testing.assert_allclose(x, x.mean(), rtol=1e-3)
    assert min(lmi_residuals(g, x, em, ep, np.full(5, 2.0))) >= -1e-7


@pytest.mark.parametrize("c", [0.25, 1.0, 9.0])
def test_post_scale_scalar_case(c):
    # K_n with weights w gives M = (n w)^2 I; pick w so that M = c I
    n = 4
    lap = assemble_laplacian(GraphTopology.complete(n), np.full(6, np.sqrt(c) / n))
    np.testing.assert_allclose(reduced_hessian(lap, np.ones(n)), c * np.eye(n - 1), atol=1e-12)
    res = post_scale(lap, np.ones(n), np.ones(n))
    assert res.beta == pytest.approx(1 / np.sqrt(c))
    assert res.epsilon == pytest.approx(0.0, abs=1e-12)


def test_post_scale_is_scale_invariant():
    g = random_connected(7, 11, seed=8)
    p = random_instance(7, "wide", seed=8)
    lap = unweighted_laplacian(g)
    a = post_scale(lap, p.delta, p.Delta)
    b = post_scale(lap.scaled(37.0), p.delta, p.Delta)
    np.testing.assert_allclose(a.L_star.matrix, b.L_star.matrix, rtol=1e-10)
    assert abs(a.eps_Lstar.balance) <= 1e-8 and a.epsilon < 1


def test_post_scale_rejects_zero():
    g = GraphTopology.path(3)
    from dana.graph import laplacian_from_nonneg
    with pytest.raises(InvalidInput):
        post_scale(laplacian_from_nonneg(g, [0.0, 0.0]), [1.0] * 3)


def test_p5_complete_graph():
    assert solve_p5(GraphTopology.complete(6)).eps_A <= 1e-2


def test_p5_lower_bounds_design():
    g = random_connected(8, 14, seed=6)
    p = random_instance(8, "tight", seed=6)
    res = design(g, p.delta, p.Delta, lower_bound=True)
    assert res.eps_A <= res.epsilon + 1e-6
    two = solve_p5(g, hops=2)
    assert two.eps_A <= res.eps_A + 1e-6


def test_design_path_graph_falls_back():
    res = design(GraphTopology.path(4), [1.0, 2.0, 1.0, 3.0], [2.0, 3.0, 2.0, 4.0])
    assert res.epsilon < 1
    assert res.diagnostics["formulation"] in ("p4", "ratio")


def test_global_bounds_more_conservative():
    g = random_connected(10, 30, seed=1)
    p = random_instance(10, "tight", seed=1)
    loc = design(g, p.delta, p.Delta)
    glob = design(g, p.delta, p.Delta, mode="global")
    assert glob.epsilon >= loc.epsilon - 1e-3


def test_design_result_json():
    g = random_connected(5, 6, seed=0)
    res = design(g, np.ones(5), 2 * np.ones(5))
    data = json.loads(res.to_json())
    assert data["epsilon"] == pytest.approx(res.epsilon)
    assert np.asarray(data["L"]).shape == (5, 5)


def test_unweighted_design_balanced():
    g = random_connected(9, 15, seed=3)
    res = unweighted_design(g, np.ones(9), 3 * np.ones(9))
    assert res.epsilon < 1 and abs(res.eps_Lstar.balance) <= 1e-8


def test_designer_estimator():
    g = random_connected(6, 9, seed=2)
    p = random_instance(6, "tight", seed=2)
    est = LaplacianDesigner(lower_bound=True)
    assert est.fit(g, p) is est
    assert est.epsilon_ < 1 and est.eps_A_ <= est.epsilon_ + 1e-6
    np.testing.assert_array_equal(est.transform(), est.laplacian_.matrix)
    assert clone(est).get_params()["lower_bound"] is True
    with pytest.raises(InvalidInput):
        LaplacianDesigner(mode="bogus").fit(g, p)
