import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dana.exceptions import InvalidInput
from dana.linalg import eig_sym, jacobi_eigh, neumann_apply, neumann_inverse, psd_project


def random_sym(rng, n):
    A = rng.normal(size=(n, n))
    return A + A.T


def test_identity_eigenvalues():
    dec = eig_sym(np.eye(3))
    np.testing.assert_allclose(dec.eigenvalues, [1, 1, 1])
    np.testing.assert_allclose(dec.eigenvectors.T @ dec.eigenvectors, np.eye(3), atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_diagonal_sorted(method):
    dec = eig_sym(np.diag([3.0, 1.0, 2.0]), method=method)
    np.testing.assert_allclose(dec.eigenvalues, [1, 2, 3])


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_path_laplacian_spectrum(method):
    L = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], float)
    np.testing.assert_allclose(eig_sym(L, method=method).eigenvalues, [0, 1, 3], atol=1e-12)


def test_nonfinite_rejected():
    with pytest.raises(InvalidInput):
        eig_sym(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_asymmetric_rejected():
    with pytest.raises(InvalidInput):
        eig_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_jacobi_matches_lapack(n, seed):
    A = random_sym(np.random.default_rng(seed), n)
    vals, vecs = jacobi_eigh(A)
    np.testing.assert_allclose(np.sort(vals), np.linalg.eigvalsh(A), atol=1e-10)
    np.testing.assert_allclose((vecs * vals) @ vecs.T, A, atol=1e-10)


def test_reconstruct_and_apply(rng):
    A = random_sym(rng, 6)
    dec = eig_sym(A)
    np.testing.assert_allclose(dec.reconstruct(), A, atol=1e-12)
    np.testing.assert_allclose(dec.apply(lambda mu: mu ** 2), A @ A, atol=1e-10)


def test_psd_project_examples():
    np.testing.assert_allclose(psd_project(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]))
    np.testing.assert_allclose(psd_project(np.diag([-2.0, -3.0])), np.zeros((2, 2)))


def test_psd_project_fixed_point(rng):
    B = rng.normal(size=(5, 5))
    A = B @ B.T
    np.testing.assert_allclose(psd_project(A), A, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_psd_project_is_psd_and_idempotent(seed):
    A = random_sym(np.random.default_rng(seed), 5)
    P = psd_project(A)
    assert np.linalg.eigvalsh(P)[0] >= -1e-12
    np.testing.assert_allclose(psd_project(P), P, atol=1e-10)


def test_neumann_identity():
    np.testing.assert_allclose(neumann_inverse(np.eye(3), 7), np.eye(3))


def test_neumann_half_identity():
    np.testing.assert_allclose(neumann_inverse(0.5 * np.eye(2), 1), 1.5 * np.eye(2))


def test_neumann_tail_bound(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    mu = rng.uniform(0.3, 1.7, 6)
    M = (Q * mu) @ Q.T
    err = np.linalg.norm(neumann_inverse(M, 20) - np.linalg.inv(M), 2)
    assert err <= 0.7 ** 21 / (1 - 0.7)


def test_neumann_apply_matches_matrix(rng):
    B = 0.3 * random_sym(rng, 4) / 4
    v = rng.normal(size=4)
    S = neumann_inverse(np.eye(4) - B, 5)
    np.testing.assert_allclose(neumann_apply(lambda y: B @ y, v, 5), S @ v, atol=1e-12)
