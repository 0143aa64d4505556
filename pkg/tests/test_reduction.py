import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dana.exceptions import InvalidInput
from dana.graph import GraphTopology, random_connected, unweighted_laplacian
from dana.reduction import build_T, epsilon_of, reduced_hessian, reducer


@pytest.mark.parametrize("n", [2, 3, 5, 17])
def test_T_orthogonal_and_projector(n):
    T = build_T(n)
    np.testing.assert_allclose(T.T @ T, np.eye(n), atol=1e-13)
    R = reducer(n)
    np.testing.assert_allclose(R @ R.T, np.eye(n) - np.ones((n, n)) / n, atol=1e-13)
    np.testing.assert_allclose(R @ R.T @ np.ones(n), 0, atol=1e-13)


def test_T_three_nodes_by_hand():
    s = np.sqrt(3)
    rho = (3 * (4 + 2 * s)) ** -0.5
    T = build_T(3)
    assert T[0, 0] == pytest.approx(rho * (2 + s))
    assert T[0, 1] == pytest.approx(-rho)
    assert T[2, 0] == pytest.approx(rho * (-1 - s))
    assert T[1, 2] == pytest.approx(1 / s)
    vals = np.linalg.eigvalsh(reducer(3) @ reducer(3).T)
    np.testing.assert_allclose(vals, [0, 1, 1], atol=1e-13)


def test_T_small_n_rejected():
    with pytest.raises(InvalidInput):
        build_T(1)


def test_reduced_hessian_two_nodes():
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    M = reduced_hessian(L, np.ones(2))
    assert M.shape == (1, 1)
    assert M[0, 0] == pytest.approx(np.linalg.eigvalsh(L @ L)[-1])


def test_reduced_hessian_zero_laplacian():
    np.testing.assert_allclose(reduced_hessian(np.zeros((4, 4)), np.ones(4)), 0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 1000))
def test_reduced_spectrum_matches(n, seed):
    rng = np.random.default_rng(seed)
    g = random_connected(n, min(n * (n - 1) // 2, 2 * n), seed=seed)
    L = unweighted_laplacian(g).matrix * rng.uniform(0.1, 1.0)
    h = rng.uniform(0.5, 2.0, n)
    full = np.linalg.eigvalsh(L @ np.diag(h) @ L)
    red = np.linalg.eigvalsh(reduced_hessian(L, h))
    np.testing.assert_allclose(np.sort(np.r_[0.0, red]), full, atol=1e-8)


def test_epsilon_examples():
    n = 4
    C = np.eye(n) - np.ones((n, n)) / n          # M = I for L = C, H = I
    assert epsilon_of(C, np.ones(n), np.ones(n)).value == pytest.approx(0.0, abs=1e-12)
    L2 = np.array([[1.0, -1.0], [-1.0, 1.0]]) / 2  # L^2 eigenvalue 1 -> M = h
    eps = epsilon_of(L2, [0.5, 0.5], [1.5, 1.5])
    assert eps.value == pytest.approx(0.5)
    assert eps.satisfies_assumption


def test_epsilon_bound_order_checked():
    L = unweighted_laplacian(GraphTopology.path(3))
    with pytest.raises(InvalidInput):
        epsilon_of(L, [2.0] * 3, [1.0] * 3)


def test_epsilon_extremes_at_bounds(designed_sinusoid, rng):
    p, L = designed_sinusoid
    eps = epsilon_of(L, p.delta, p.Delta)
    for _ in range(20):
        h = rng.uniform(p.delta, p.Delta)
        mu = np.linalg.eigvalsh(reduced_hessian(L, h))
        assert mu[0] >= eps.mu_min - 1e-12 and mu[-1] <= eps.mu_max + 1e-12
