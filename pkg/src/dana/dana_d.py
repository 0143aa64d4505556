"""Discrete-time distributed approximate Newton iteration.

With ``x = x0 + L z`` the reduced objective ``g(z) = f(x0 + L z)`` has
gradient ``L grad f`` and singular Hessian ``L H L``. The iteration

    z+ = z - alpha A_q(z) grad g(z),   A_q = sum_{p=0}^{q} (I - L H L)^p

uses a truncated Neumann series for the pseudo-inverse of ``L H L``. Only
matrix-vector products appear, so every step is computable by agents that
talk to their one-hop neighbours.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_positive, check_vector
from .exceptions import AssumptionViolated, InvalidInput, StepSizeTooLarge
from .problem import DispatchProblem
from .reduction import epsilon_of, reduced_hessian, reducer
from .trace import DANA_D_COLUMNS, SolverTrace

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000
DIVERGENCE_PATIENCE = 10
STEP_POLICIES = ("theorem1", "theorem2", "curvature")


def _mat(L):
    return np.asarray(getattr(L, "matrix", L), dtype=float)


def reduced_step(L, h, grad, q):
    """``-A_q L grad`` via the recursion ``y <- (I - L H L) y``.

    Returns the ``z``-space step; :func:`newton_direction` maps it through
    ``L``.
    """
    Lm = _mat(L)
    y = Lm @ grad
    z = -y
    for _ in range(q):
        y = y - Lm @ (h * (Lm @ y))
        z -= y
    return z


def newton_direction(L, h, grad, q):
    """Approximate Newton direction ``-L sum_p (I - L H L)^p L grad`` in ``x``.

    Parameters
    ----------
    L : array_like or WeightedLaplacian
    h : array_like, shape (n,)
        Diagonal of the Hessian ``H(x)``.
    grad : array_like, shape (n,)
        ``grad f(x)``.
    q : int
        Truncation order.

    Returns
    -------
    ndarray, shape (n,)
        Orthogonal to ``1`` up to rounding.
    """
    Lm = _mat(L)
    n = Lm.shape[0]
    h = check_vector(h, "h", n)
    grad = check_vector(grad, "grad", n)
    q = check_int(q, "q", minimum=0)
    return Lm @ reduced_step(Lm, h, grad, q)


def exact_newton_direction(L, h, grad):
    """Exact reduced Newton direction ``-L R M^{-1} R^T L grad`` (dense oracle)."""
    Lm = _mat(L)
    R = reducer(Lm.shape[0])
    M = reduced_hessian(Lm, h)
    return -Lm @ (R @ np.linalg.solve(M, R.T @ (Lm @ grad)))


def _check_eps(eps, n, q):
    eps = float(eps)
    if not np.isfinite(eps) or eps < 0:
        raise InvalidInput(f"eps must be a finite nonnegative number, got {eps}")
    if eps >= 1:
        raise AssumptionViolated(f"eps = {eps} >= 1: the Neumann series does not converge")
    n = check_int(n, "n", minimum=2)
    q = check_int(q, "q", minimum=0)
    return eps, n, q


def step_bound_thm1(eps, n, q):
    """Largest step of the descent guarantee: ``2(1-e)/((n-1)(1+e)(1-e^{q+1}))``.

    Raises
    ------
    AssumptionViolated
        If ``eps >= 1``.
    """
    eps, n, q = _check_eps(eps, n, q)
    return 2 * (1 - eps) / ((n - 1) * (1 + eps) * (1 - eps ** (q + 1)))


def rate_bound_thm2(eps, n, q, dist):
    """Guaranteed per-step decrease and the step size that attains it.

    Returns
    -------
    bound : float
        ``-(1-e)^4 (1 + e(-e)^q)^2 dist^2 / (2 (n-1)^2 (1+e)^3 (1 - e^{2(q+1)}))``.
    alpha : float
        ``(1-e) / ((n-1)(1+e)(1-e^{q+1}))``.
    """
    eps, n, q = _check_eps(eps, n, q)
    dist = float(dist)
    num = (1 - eps) ** 4 * (1 + eps * (-eps) ** q) ** 2 * dist ** 2
    den = 2 * (n - 1) ** 2 * (1 + eps) ** 3 * (1 - eps ** (2 * (q + 1)))
    alpha = (1 - eps) / ((n - 1) * (1 + eps) * (1 - eps ** (q + 1)))
    return -num / den, alpha


def curvature_step(eps, q):
    """``1 / max_{|eta| <= eps} (1 - eta^{q+1})``.

    ``A_q L H L`` has eigenvalues ``1 - eta^{q+1}`` on the complement of
    ``1`` (``eta`` the eigenvalues of ``I - M``); this normalizes the
    largest one to one, making the slowest mode contract by
    ``1 - (1 - eps^{q+1}) / (1 + eps^{q+1})`` for even ``q``.
    """
    eps, _, q = _check_eps(eps, 2, q)
    if q % 2 == 1:
        return 1.0
    return 1.0 / (1.0 + eps ** (q + 1))


def resolve_step(alpha, eps, n, q):
    """Turn a step policy (or a number) into a positive step size.

    ``"theorem1"`` is 0.99 times :func:`step_bound_thm1`, ``"theorem2"``
    the rate point of :func:`rate_bound_thm2` and ``"curvature"``
    :func:`curvature_step`.
    """
    if isinstance(alpha, str):
        if alpha == "theorem1":
            return 0.99 * step_bound_thm1(eps, n, q)
        if alpha == "theorem2":
            return rate_bound_thm2(eps, n, q, 0.0)[1]
        if alpha == "curvature":
            return curvature_step(eps, q)
        raise InvalidInput(f"unknown step policy {alpha!r}; choose from {STEP_POLICIES}")
    return check_positive(alpha, "alpha")


def laplacian_epsilon(p, L):
    """``eps`` from design metadata when present, else from the cost bounds."""
    meta = getattr(L, "metadata", None) or {}
    if meta.get("epsilon") is not None:
        return float(meta["epsilon"])
    return epsilon_of(_mat(L), p.delta, p.Delta).value


def z_star_from(p, L, x_star, z_ref):
    """Optimal ``z`` with the same ``1``-component as ``z_ref``.

    ``1^T z`` is invariant under the iteration, so distances are measured to
    this representative of the optimal set ``{z : x0 + L z = x*}``.
    """
    Lm = _mat(L)
    z = np.linalg.lstsq(Lm, np.asarray(x_star) - p.x0, rcond=None)[0]
    z -= z.mean()
    return z + np.mean(z_ref)


@dataclass
class RunResult:
    """Outcome of a discrete-time run.

    ``decrements[k] = g(z^{k+1}) - g(z^k)`` measured on the constraint
    manifold (see :meth:`DispatchProblem.conserving_increment`);
    ``dists[k] = ||z^k - z*||`` when ``z*`` was supplied.
    """

    x: np.ndarray
    z: np.ndarray
    n_iter: int
    converged: bool
    alpha: float
    epsilon: float
    q: int
    trace: SolverTrace
    decrements: np.ndarray
    dists: np.ndarray = None
    states: list = field(default_factory=list)
    rounds_per_iter: int = 0
    info: dict = field(default_factory=dict)


def _prepare(p, L, q, alpha, eps):
    if not isinstance(p, DispatchProblem):
        raise InvalidInput("p must be a DispatchProblem")
    Lm = _mat(L)
    if Lm.shape != (p.n, p.n):
        raise InvalidInput(f"L has shape {Lm.shape}, expected {(p.n, p.n)}")
    q = check_int(q, "q", minimum=0)
    if eps is None:
        eps = laplacian_epsilon(p, L)
    a = resolve_step(alpha, eps, p.n, q)
    return Lm, q, a, float(eps)


def run_matrix_form(p, L, q=0, alpha="theorem1", *, max_iters=DEFAULT_MAX_ITERS,
                    tol=DEFAULT_TOL, eps=None, z0=None, x_star=None, z_star=None,
                    record_states=False, record_every=1):
    """Iterate ``z+ = z - alpha A_q(z) grad g(z)`` until ``||grad g||_inf <= tol``.

    Parameters
    ----------
    p : DispatchProblem
        Box limits, if any, are ignored.
    L : array_like or WeightedLaplacian
    q : int
    alpha : float or {"theorem1", "theorem2", "curvature"}
    max_iters : int
    tol : float
        Stop when ``||L grad f(x)||_inf <= tol``.
    eps : float, optional
        Overrides the ``eps`` used by step policies.
    z0 : array_like, optional
        Initial ``z`` (default zero); ``x`` starts at ``x0 + L z0``.
    x_star : array_like, optional
        Optimizer, enables the ``obj_gap`` column.
    z_star : array_like, optional
        Optimal ``z`` for the distance record.
    record_states : bool
        Keep ``(x, z_step)`` snapshots for every iteration.
    record_every : int
        Trace thinning factor.

    Returns
    -------
    RunResult

    Raises
    ------
    StepSizeTooLarge
        If ``g`` increases for 10 consecutive iterations or the iterate
        becomes non-finite.
    """
    Lm, q, a, eps = _prepare(p, L, q, alpha, eps)

    def advance(x, z):
        step = reduced_step(Lm, p.hess(x), p.grad(x), q)
        return step, x + Lm @ (a * step)

    return _drive(p, Lm, q, a, eps, advance, max_iters=max_iters, tol=tol, z0=z0,
                  x_star=x_star, z_star=z_star, record_states=record_states,
                  record_every=record_every)


def _drive(p, Lm, q, a, eps, advance, *, max_iters, tol, z0, x_star, z_star,
           record_states, record_every, info=None):
    """Shared outer loop: stopping, monitoring and divergence detection.

    ``advance(x, z)`` returns ``(step, x_new)`` where ``step`` is the
    unscaled ``z``-space direction.
    """
    z = np.zeros(p.n) if z0 is None else check_vector(z0, "z0", p.n).copy()
    x = p.x0 + Lm @ z
    rounds = 2 * q + 2
    trace = SolverTrace(DANA_D_COLUMNS)
    decs, dists, states = [], [], []
    start = time.perf_counter()
    rising = 0
    converged = False
    k = 0
    while True:
        gnorm = float(np.max(np.abs(Lm @ p.grad(x))))
        if z_star is not None:
            dists.append(float(np.linalg.norm(z - z_star)))
        if k % record_every == 0 or gnorm <= tol:
            gap = (p.conserving_increment(x_star, x - x_star)
                   if x_star is not None else np.nan)
            trace.append(iter=k, obj_gap=gap, grad_norm=gnorm, feas_err=abs(x.sum() - p.d),
                         msgs=k * rounds, elapsed_s=time.perf_counter() - start)
        if gnorm <= tol:
            converged = True
            break
        if k >= max_iters:
            break
        step, x_new = advance(x, z)
        dx = x_new - x
        dg = p.conserving_increment(x, dx)
        if not (np.all(np.isfinite(x_new)) and np.isfinite(dg)):
            raise StepSizeTooLarge(f"iterate became non-finite at k={k} (alpha={a:.3g})")
        rising = rising + 1 if dg > 0 else 0
        if rising >= DIVERGENCE_PATIENCE:
            raise StepSizeTooLarge(
                f"g increased for {DIVERGENCE_PATIENCE} consecutive steps (alpha={a:.3g})")
        decs.append(dg)
        z = z + a * step
        x = x_new
        if record_states:
            states.append((x.copy(), step.copy()))
        k += 1
    info = {"direction_rounds": 2 * q + 1, "step_rounds": 1, **(info or {})}
    return RunResult(x, z, k, converged, a, eps, q, trace, np.asarray(decs),
                     np.asarray(dists) if z_star is not None else None, states, rounds, info)


class DanaD(BaseEstimator):
    """Estimator interface to the discrete-time approximate Newton method.

    Parameters
    ----------
    q : int
        Neumann truncation order.
    alpha : float or {"theorem1", "theorem2", "curvature"}
        Step size or policy.
    max_iter : int
    tol : float
        Gradient stopping tolerance (infinity norm of ``L grad f``).
    backend : {"matrix", "agents"}
        Dense recursion or the per-agent message-passing simulation.

    Attributes
    ----------
    x_, z_ : ndarray
        Final allocation and reduced variable.
    n_iter_ : int
    converged_ : bool
    alpha_ : float
        Step size actually used.
    epsilon_ : float
    trace_ : SolverTrace
    """

    def __init__(self, q=0, alpha="theorem1", max_iter=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL,
                 backend="matrix"):
        self.q = q
        self.alpha = alpha
        self.max_iter = max_iter
        self.tol = tol
        self.backend = backend

    def fit(self, problem, laplacian, x_star=None):
        """Run the iteration on ``problem`` over ``laplacian``."""
        if self.backend == "matrix":
            res = run_matrix_form(problem, laplacian, self.q, self.alpha,
                                  max_iters=self.max_iter, tol=self.tol, x_star=x_star)
        elif self.backend == "agents":
            from .agents import run_message_passing

            res = run_message_passing(problem, laplacian, self.q, self.alpha,
                                      max_iters=self.max_iter, tol=self.tol, x_star=x_star)
        else:
            raise InvalidInput(f"unknown backend {self.backend!r}")
        self.result_ = res
        self.x_, self.z_ = res.x, res.z
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.alpha_ = res.alpha
        self.epsilon_ = res.epsilon
        self.trace_ = res.trace
        return self

    def predict(self, problem=None):
        """Return the final allocation."""
        check_is_fitted(self, "x_")
        return self.x_
