import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dana.dana_d import run_matrix_form
from dana.exceptions import InfeasibleOrDegenerate, InvalidInput
from dana.graph import random_connected
from dana.problem import DispatchProblem, random_instance
from dana.reference import (oracle, run_dgd, solve_box_qp_bruteforce, solve_box_waterfill,
                            solve_equality_qp, solve_separable)
from dana.weight_design import design


def kkt_ok(p, sol, tol):
    r = p.grad(sol.x) - sol.lam_lo + sol.lam_hi - sol.nu
    assert np.max(np.abs(r)) <= tol
    assert abs(sol.x.sum() - p.d) <= tol
    assert np.all(sol.lam >= 0)
    if p.has_box:
        assert np.all(sol.x >= p.x_lo - tol) and np.all(sol.x <= p.x_hi + tol)
        assert np.max(np.abs(sol.lam_lo * (sol.x - p.x_lo))) <= tol
        assert np.max(np.abs(sol.lam_hi * (p.x_hi - sol.x))) <= tol


def test_homogeneous_closed_form():
    sol = solve_equality_qp(DispatchProblem(np.full(4, 2.0), d=10.0))
    np.testing.assert_allclose(sol.x, 2.5)


def test_three_node_no_box(three_node):
    p = three_node.without_box()
    sol = solve_equality_qp(p)
    inv = 1 / p.a
    nu = (p.d + np.sum(p.b * inv)) / inv.sum()
    np.testing.assert_allclose(sol.x, (nu - p.b) * inv)
    kkt_ok(p, sol, 1e-12)


def test_three_node_box(three_node):
    sol = solve_box_qp_bruteforce(three_node)
    np.testing.assert_allclose(sol.x, [1.0, 3.5, 1.5], atol=1e-12)
    assert sol.nu == pytest.approx(5.75)
    np.testing.assert_allclose(sol.lam, [0, 0, 0.75, 4.75, 0, 0], atol=1e-12)
    kkt_ok(three_node, sol, 1e-10)


def test_wide_box_matches_closed_form(three_node):
    wide = three_node.replace(x_lo=np.full(3, -1e3), x_hi=np.full(3, 1e3))
    np.testing.assert_allclose(solve_box_qp_bruteforce(wide).x,
                               solve_equality_qp(three_node).x, atol=1e-10)


def test_boundary_demand_rejected(three_node):
    # d = sum(x_hi) leaves a single feasible point; rejected at construction
    with pytest.raises(InvalidInput):
        three_node.replace(d=float(three_node.x_hi.sum()), x0=None)


def test_bruteforce_size_limit():
    p = random_instance(13, "box", seed=0)
    with pytest.raises(InvalidInput):
        solve_box_qp_bruteforce(p)


def test_bruteforce_reports_inconsistent_kkt(three_node, monkeypatch):
    # a demand outside the box range (bypassing validation) has no KKT point
    p = three_node.replace()
    p.d = float(p.x_hi.sum()) + 1.0
    with pytest.raises(InfeasibleOrDegenerate):
        solve_box_qp_bruteforce(p)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 10_000))
def test_oracles_agree(n, seed):
    p = random_instance(n, "box", seed=seed)
    a = solve_box_qp_bruteforce(p)
    b = solve_box_waterfill(p)
    c = solve_separable(p)
    np.testing.assert_allclose(a.x, b.x, atol=1e-10)
    np.testing.assert_allclose(b.x, c.x, atol=1e-9)
    kkt_ok(p, b, 1e-9)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 20), seed=st.integers(0, 10_000))
def test_separable_sinusoid_kkt(n, seed):
    p = random_instance(n, "sinusoid", seed=seed)
    sol = solve_separable(p)
    kkt_ok(p, sol, 1e-9)
    assert oracle(p).method == "separable"


def test_oracle_json(three_node):
    assert '"nu": 5.75' in oracle(three_node).to_json()


def test_dgd_equals_dana_d_q0(designed_quadratic):
    p, L = designed_quadratic
    sol = oracle(p)
    res = run_matrix_form(p, L, 0, alpha="theorem1", x_star=sol.x)
    x, k, trace = run_dgd(p, L, res.alpha, x_star=sol.x)
    assert k == res.n_iter
    np.testing.assert_array_equal(x, res.x)
    np.testing.assert_array_equal(trace["obj_gap"], res.trace["obj_gap"])


def test_dgd_fixed_point():
    g = random_connected(5, 6, seed=0)
    p = DispatchProblem(np.ones(5), d=5.0)
    L = design(g, p.delta, p.Delta).L_star
    x, k, _ = run_dgd(p, L, 0.5)
    assert k == 0
    np.testing.assert_array_equal(x, p.x0)
