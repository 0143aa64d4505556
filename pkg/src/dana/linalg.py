"""Dense symmetric linear algebra: eigendecomposition, PSD projection and
truncated Neumann-series inverses."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_int, check_symmetric
from .settings import DEFAULT_SETTINGS


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of a symmetric matrix.

    ``eigenvalues`` are ascending and ``eigenvectors[:, i]`` pairs with
    ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self, values=None):
        """Return ``W diag(values) W^T`` (``values`` defaults to the spectrum)."""
        vals = self.eigenvalues if values is None else np.asarray(values, float)
        W = self.eigenvectors
        return (W * vals) @ W.T

    def apply(self, func):
        """Matrix function ``W diag(func(mu)) W^T``."""
        return self.reconstruct(func(self.eigenvalues))


def as_sym(A, settings=DEFAULT_SETTINGS):
    """Validate ``A`` and return its symmetrized copy."""
    return check_symmetric(A, "A", tol=settings.symmetry_tol)


def jacobi_eigh(A, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigenvalue algorithm for a symmetric matrix.

    Rotations are applied until the off-diagonal Frobenius mass falls below
    ``tol * |A|_F``. Returns ``(eigenvalues, eigenvectors)`` unsorted.
    """
    a = np.array(A, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v
    threshold = tol * norm
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.hypot(theta, 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J restricted to rows/cols p, q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return a.diagonal().copy(), v


def eig_sym(A, method="lapack", settings=DEFAULT_SETTINGS):
    """Eigendecomposition of a symmetric matrix with ascending eigenvalues.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Symmetric matrix. Non-finite entries raise :class:`InvalidInput`.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls :func:`numpy.linalg.eigh`; ``"jacobi"`` uses the
        cyclic Jacobi rotations of :func:`jacobi_eigh`.
    """
    a = as_sym(A, settings)
    if method == "lapack":
        vals, vecs = np.linalg.eigh(a)
    elif method == "jacobi":
        vals, vecs = jacobi_eigh(a, settings.jacobi_tol, settings.jacobi_max_sweeps)
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")
    return SpectralDecomposition(vals, vecs)


def eigvalsh(A):
    """Ascending eigenvalues of a (trusted) symmetric matrix, no validation."""
    return np.linalg.eigvalsh(0.5 * (A + A.T))


def psd_project(A, settings=DEFAULT_SETTINGS):
    """Frobenius-nearest positive semidefinite matrix (eigenvalue clipping)."""
    dec = eig_sym(A, settings=settings)
    out = dec.reconstruct(np.maximum(dec.eigenvalues, 0.0))
    return 0.5 * (out + out.T)


def _psd_part(a):
    # unvalidated variant for inner loops
    vals, vecs = np.linalg.eigh(a)
    pos = vals > 0
    if not np.any(pos):
        return np.zeros_like(a)
    w = vecs[:, pos]
    out = (w * vals[pos]) @ w.T
    return 0.5 * (out + out.T)


def neumann_inverse(M, q):
    """Truncated series ``sum_{p=0}^{q} (I - M)^p``.

    Evaluated with the recursion ``S <- I + (I - M) S``; it approximates
    ``M^{-1}`` only when the spectrum of ``I - M`` lies in the unit ball.
    """
    m = check_symmetric(M, "M")
    q = check_int(q, "q", minimum=0)
    n = m.shape[0]
    eye = np.eye(n)
    B = eye - m
    S = eye.copy()
    for _ in range(q):
        S = eye + B @ S
    return 0.5 * (S + S.T)


def neumann_apply(matvec, v, q):
    """Apply ``sum_{p=0}^{q} B^p`` to ``v`` given ``matvec(y) = B y``.

    Returns the accumulated sum; only matrix-vector products are used.
    """
    y = np.array(v, dtype=float)
    acc = y.copy()
    for _ in range(q):
        y = matvec(y)
        acc += y
    return acc
