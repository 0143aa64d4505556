"""Reduction to the ``n - 1`` nonzero modes of ``L H L`` and the eps metric."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import check_int, check_vector
from .exceptions import InvalidInput


@lru_cache(maxsize=64)
def _build_T(n):
    s = np.sqrt(n)
    T = -np.ones((n, n))
    idx = np.arange(n - 1)
    T[idx, idx] = n - 1 + s
    T[n - 1, : n - 1] = -1 - s
    T[:, n - 1] = 1 / s
    rho = 1.0 / np.sqrt(n * (n + 1 + 2 * s))
    T[:, : n - 1] *= rho
    T.setflags(write=False)
    return T


def build_T(n):
    """Orthogonal change of basis whose last column is ``1 / sqrt(n)``.

    The first ``n - 1`` columns are an orthonormal basis of the complement of
    ``1``, so ``T J^T J T^T = I - 1 1^T / n``. Cached per ``n`` and returned
    read-only.
    """
    n = check_int(n, "n", minimum=2)
    return _build_T(n)


def reducer(n):
    """``T J^T``: the first ``n - 1`` columns of ``T`` (shape ``n x (n-1)``)."""
    return build_T(n)[:, : n - 1]


def reduced_hessian(L, h):
    """``M = J T^T L diag(h) L T J^T``, shape ``(n-1) x (n-1)``."""
    Lm = np.asarray(getattr(L, "matrix", L), dtype=float)
    n = Lm.shape[0]
    h = check_vector(h, "h", n)
    R = reducer(n)
    B = R.T @ Lm
    M = (B * h) @ B.T
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class EpsilonMetric:
    """``eps = max(|1 - mu_1(M_delta)|, |1 - mu_{n-1}(M_Delta)|)``."""

    value: float
    mu_min: float
    mu_max: float

    @property
    def satisfies_assumption(self):
        return self.value < 1.0

    @property
    def balance(self):
        """``(1 - mu_min) + (1 - mu_max)``; zero after post-scaling."""
        return (1.0 - self.mu_min) + (1.0 - self.mu_max)


def epsilon_of(L, h_lo, h_hi):
    """Worst-case ``|1 - mu_i(M(x))|`` over Hessians between the two bounds.

    For diagonal ``H`` with ``h_lo <= H <= h_hi`` the quadratic form of
    ``M(x)`` is monotone in ``H``, so the extreme eigenvalues are attained at
    the bound matrices.
    """
    Lm = np.asarray(getattr(L, "matrix", L), dtype=float)
    n = Lm.shape[0]
    h_lo = check_vector(h_lo, "h_lo", n, positive=True)
    h_hi = check_vector(h_hi, "h_hi", n, positive=True)
    if np.any(h_lo > h_hi):
        raise InvalidInput("need h_lo <= h_hi componentwise")
    mu_min = float(np.linalg.eigvalsh(reduced_hessian(Lm, h_lo))[0])
    mu_max = float(np.linalg.eigvalsh(reduced_hessian(Lm, h_hi))[-1])
    return EpsilonMetric(max(abs(1 - mu_min), abs(1 - mu_max)), mu_min, mu_max)


def reduced_spectrum(L, h):
    """Eigenvalues of ``I - L H L`` on the complement of ``1`` (ascending)."""
    return np.sort(1.0 - np.linalg.eigvalsh(reduced_hessian(L, h)))
