"""Linear-matrix-inequality machinery behind the weight design.

Two interchangeable backends solve the same problems:

* ``"cvxpy"`` hands the LMIs to an interior-point conic solver.
* ``"projection"`` bisects on the scalar objective and decides each
  feasibility probe with Dykstra's alternating projections between the
  affine constraint structure and the positive semidefinite cone.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import NoFeasiblePoint
from .linalg import _psd_part
from .reduction import reducer
from .settings import DEFAULT_SETTINGS

log = logging.getLogger(__name__)

SQRT8 = np.sqrt(8.0)
# c(t) / sqrt(1 + t) is smallest at t = sqrt(16/3); c(t) is decreasing on [0, 2]
P4_T_MAX = 2.0


def c_plus(t):
    """Right-hand side ``1 - t/2 + t^2/8`` of the square-completion constraint."""
    return 1.0 - 0.5 * t + t * t / 8.0


def eps_plus_needed(lam_min_s):
    """Smallest ``eps+ >= 0`` with ``lambda_min(S) >= 1 - eps+/2 + eps+^2/8``.

    Returns ``inf`` when ``lambda_min(S) < 1/2`` (no ``eps+`` works).
    """
    if lam_min_s >= 1.0:
        return 0.0
    if lam_min_s < 0.5:
        return np.inf
    return 2.0 - 2.0 * np.sqrt(2.0 * lam_min_s - 1.0)


@dataclass
class EdgeOperators:
    """Per-edge linear maps of the weight-design LMIs.

    For weights ``x``: ``L(x) = sum_e x_e l_e l_e^T`` with ``l_e`` the
    incidence row, ``B(x) = R^T L(x)`` with ``R = T J^T`` and
    ``S(x) = R^T (sqrt(H) L(x) + L(x) sqrt(H)) R / 2``.
    """

    n: int
    E: np.ndarray
    R: np.ndarray
    h_lo: np.ndarray
    h_hi: np.ndarray
    B_ops: np.ndarray = field(init=False)   # (m, n-1, n)
    S_ops: np.ndarray = field(init=False)   # (m, n-1, n-1)

    def __post_init__(self):
        m = self.E.shape[0]
        sq = np.sqrt(self.h_hi)
        self.B_ops = np.empty((m, self.n - 1, self.n))
        self.S_ops = np.empty((m, self.n - 1, self.n - 1))
        for e in range(m):
            le = self.E[e]
            Le = np.outer(le, le)
            self.B_ops[e] = self.R.T @ Le
            sym = sq[:, None] * Le + Le * sq[None, :]
            self.S_ops[e] = 0.5 * self.R.T @ sym @ self.R

    @property
    def m(self):
        return self.E.shape[0]

    def L(self, x):
        return self.E.T @ (x[:, None] * self.E)

    def B(self, x):
        return np.tensordot(x, self.B_ops, axes=1)

    def S(self, x):
        S = np.tensordot(x, self.S_ops, axes=1)
        return 0.5 * (S + S.T)

    def M_lo(self, x):
        B = self.B(x)
        return (B * self.h_lo) @ B.T

    def eps_minus_needed(self, x):
        return float(np.linalg.eigvalsh(self.M_lo(x))[-1] - 1.0)

    def lam_min_S(self, x):
        return float(np.linalg.eigvalsh(self.S(x))[0])

    def ratio(self, x):
        """Scale-free ``lambda_min(S(x)) / sqrt(lambda_max(M_lo(x)))``."""
        top = float(np.linalg.eigvalsh(self.M_lo(x))[-1])
        if top <= 0.0:
            return 0.0
        return self.lam_min_S(x) / np.sqrt(top)

    def p4_objective(self, x):
        """Exact ``(eps-, eps+)`` making both LMIs tight at weights ``x``."""
        em = max(self.eps_minus_needed(x), 0.0)
        ep = eps_plus_needed(self.lam_min_S(x))
        return em, ep

    def p4_blocks(self, x, em, ep):
        """The two LMI block matrices at ``(x, eps-, eps+)``."""
        k = self.n - 1
        I = np.eye(k)
        B = self.B(x)
        blk11 = np.block([[(1.0 + em) * I, B], [B.T, np.diag(1.0 / self.h_lo)]])
        dot = self.S(x) - (1.0 - 0.5 * ep) * I
        blk12 = np.block([[dot, ep / SQRT8 * I], [ep / SQRT8 * I, I]])
        return blk11, blk12


@dataclass
class SolveInfo:
    backend: str
    formulation: str
    status: str
    iterations: int = 0
    probes: int = 0
    residual: float = 0.0
    objective: float = float("nan")

    def as_dict(self):
        return dict(self.__dict__)


# --------------------------------------------------------------------------
# cvxpy backend


def _cvxpy_solve(problem, settings):
    import cvxpy as cp

    for solver in ("CLARABEL", "SCS"):
        if solver not in cp.installed_solvers():
            continue
        try:
            problem.solve(solver=solver)
        except cp.error.SolverError as exc:
            log.debug("solver %s failed: %s", solver, exc)
            continue
        if problem.status in ("optimal", "optimal_inaccurate", "infeasible",
                              "infeasible_inaccurate"):
            return solver
    return None


def p4_cvxpy(ops, settings=DEFAULT_SETTINGS):
    import cvxpy as cp

    k = ops.n - 1
    I = np.eye(k)
    x = cp.Variable(ops.m, nonneg=True)
    em = cp.Variable(nonneg=True)
    ep = cp.Variable(nonneg=True)
    t = cp.Variable()
    L = ops.E.T @ cp.diag(x) @ ops.E
    B = ops.R.T @ L
    blk11 = cp.bmat([[(em + 1) * I, B], [B.T, np.diag(1.0 / ops.h_lo)]])
    sq = np.diag(np.sqrt(ops.h_hi))
    S = 0.5 * ops.R.T @ (sq @ L + L @ sq) @ ops.R
    dot = S - (1 - 0.5 * ep) * I
    blk12 = cp.bmat([[dot, ep / SQRT8 * I], [ep / SQRT8 * I, I]])
    cons = [t >= em, t >= ep, 0.5 * (blk11 + blk11.T) >> 0, 0.5 * (blk12 + blk12.T) >> 0]
    prob = cp.Problem(cp.Minimize(t), cons)
    used = _cvxpy_solve(prob, settings)
    if used is None or prob.status.startswith("infeasible") or x.value is None:
        raise NoFeasiblePoint(f"P4 infeasible (status={prob.status})")
    xv = np.maximum(np.asarray(x.value, float), 0.0)
    return xv, SolveInfo("cvxpy", "p4", prob.status, objective=float(prob.value))


def ratio_cvxpy(ops, settings=DEFAULT_SETTINGS):
    import cvxpy as cp

    k = ops.n - 1
    x = cp.Variable(ops.m, nonneg=True)
    s = cp.Variable()
    L = ops.E.T @ cp.diag(x) @ ops.E
    B = ops.R.T @ L
    blk = cp.bmat([[np.eye(k), B], [B.T, np.diag(1.0 / ops.h_lo)]])
    sq = np.diag(np.sqrt(ops.h_hi))
    S = 0.5 * ops.R.T @ (sq @ L + L @ sq) @ ops.R
    cons = [0.5 * (blk + blk.T) >> 0, 0.5 * (S + S.T) - s * np.eye(k) >> 0]
    prob = cp.Problem(cp.Maximize(s), cons)
    used = _cvxpy_solve(prob, settings)
    if used is None or x.value is None or prob.value is None or prob.value <= 0:
        raise NoFeasiblePoint(f"ratio design failed (status={prob.status})")
    xv = np.maximum(np.asarray(x.value, float), 0.0)
    return xv, SolveInfo("cvxpy", "ratio", prob.status, objective=float(prob.value))


def mask_pairs(mask):
    n = mask.shape[0]
    return [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]


def p5_cvxpy(n, pairs, settings=DEFAULT_SETTINGS):
    import cvxpy as cp

    R = reducer(n)
    k = n - 1
    I = np.eye(k)
    # A = sum_p a_p (e_i - e_j)(e_i - e_j)^T: symmetric, zero row sums
    D = np.zeros((len(pairs), n))
    for r, (i, j) in enumerate(pairs):
        D[r, i], D[r, j] = 1.0, -1.0
    a = cp.Variable(len(pairs))
    eps = cp.Variable()
    A = D.T @ cp.diag(a) @ D
    MA = R.T @ A @ R
    MA = 0.5 * (MA + MA.T)
    cons = [0.5 * (A + A.T) >> 0, MA - (1 - eps) * I >> 0, (1 + eps) * I - MA >> 0]
    prob = cp.Problem(cp.Minimize(eps), cons)
    used = _cvxpy_solve(prob, settings)
    if used is None or a.value is None:
        raise NoFeasiblePoint(f"P5 failed (status={prob.status})")
    Av = D.T @ (np.asarray(a.value, float)[:, None] * D)
    return 0.5 * (Av + Av.T), SolveInfo("cvxpy", "p5", prob.status, objective=float(prob.value))


# --------------------------------------------------------------------------
# alternating-projection backend


class DykstraLMI:
    """Feasibility of ``C_b(t) + sum_j x_j G_{b,j} >= 0`` for every block ``b``.

    ``nonneg`` flags the coordinates of ``x`` constrained to be ``>= 0``.
    The affine projection solves the normal equations with a Cholesky factor
    computed once; only the constant terms change between probes.
    """

    def __init__(self, G_blocks, nonneg, settings=DEFAULT_SETTINGS):
        self.G = [np.asarray(G, float) for G in G_blocks]   # each (k, d, d)
        self.dims = [G.shape[1] for G in self.G]
        self.k = self.G[0].shape[0]
        self.nonneg = np.asarray(nonneg, bool)
        self.settings = settings
        self.Gmat = [G.reshape(self.k, -1).T for G in self.G]   # (d*d, k)
        K = np.eye(self.k)
        for Gm in self.Gmat:
            K += Gm.T @ Gm
        self.chol = sla.cho_factor(K)

    def affine(self, x0, Ys, Cs):
        rhs = x0.copy()
        for Gm, Y, C in zip(self.Gmat, Ys, Cs):
            rhs += Gm.T @ (Y - C).ravel()
        x = sla.cho_solve(self.chol, rhs)
        Ys = [C + (Gm @ x).reshape(C.shape) for Gm, C in zip(self.Gmat, Cs)]
        return x, Ys

    def cone(self, x, Ys):
        x = x.copy()
        x[self.nonneg] = np.maximum(x[self.nonneg], 0.0)
        return x, [_psd_part(0.5 * (Y + Y.T)) for Y in Ys]

    def blocks(self, x, Cs):
        return [C + (Gm @ x).reshape(C.shape) for Gm, C in zip(self.Gmat, Cs)]

    def violation(self, x, Cs):
        """Largest negative eigenvalue over blocks (0 when feasible)."""
        worst = 0.0
        for F in self.blocks(x, Cs):
            worst = max(worst, -float(np.linalg.eigvalsh(0.5 * (F + F.T))[0]))
        if np.any(self.nonneg):
            worst = max(worst, -float(np.min(x[self.nonneg], initial=0.0)))
        return worst

    def probe(self, Cs, x_init, sweeps=None, accept=None):
        """Run Dykstra from ``x_init``; return ``(feasible, x, sweeps_used)``.

        ``accept(x)`` may replace the default test (largest block violation
        at most ``projection_residual``) with an exact problem-specific one.
        """
        sweeps = self.settings.projection_sweeps if sweeps is None else sweeps
        tol = self.settings.projection_residual
        if accept is None:
            accept = lambda x: self.violation(x, Cs) <= tol  # noqa: E731
        # aim strictly inside the set so iterates become feasible in finite time
        Cs = [C - self.settings.projection_margin * np.eye(C.shape[0]) for C in Cs]
        u = (x_init.copy(), self.blocks(x_init, Cs))
        p = (np.zeros(self.k), [np.zeros_like(C) for C in Cs])
        q = (np.zeros(self.k), [np.zeros_like(C) for C in Cs])
        x_aff = x_init
        for it in range(1, sweeps + 1):
            ax, aY = self.affine(u[0] + p[0], [U + P for U, P in zip(u[1], p[1])], Cs)
            p = (u[0] + p[0] - ax, [U + P - A for U, P, A in zip(u[1], p[1], aY)])
            cx, cY = self.cone(ax + q[0], [A + Q for A, Q in zip(aY, q[1])])
            q = (ax + q[0] - cx, [A + Q - C for A, Q, C in zip(aY, q[1], cY)])
            u = (cx, cY)
            x_aff = ax
            if it % 10 == 0 or it == sweeps:
                x_try = x_aff.copy()
                x_try[self.nonneg] = np.maximum(x_try[self.nonneg], 0.0)
                if accept(x_try):
                    return True, x_try, it
        x_try = x_aff.copy()
        x_try[self.nonneg] = np.maximum(x_try[self.nonneg], 0.0)
        return accept(x_try), x_try, sweeps


def _bisect(probe, lo, hi, settings):
    """Smallest feasible level in ``[lo, hi]``; ``probe(level)`` -> (ok, x)."""
    ok, x = probe(hi)
    if not ok:
        raise NoFeasiblePoint(f"infeasible even at level {hi}")
    best, best_x, steps = hi, x, 1
    while hi - lo > settings.bisection_tol and steps < settings.bisection_steps:
        mid = 0.5 * (lo + hi)
        ok, x = probe(mid)
        steps += 1
        if ok:
            hi, best, best_x = mid, mid, x
        else:
            lo = mid
    return best, best_x, steps


def p4_projection(ops, settings=DEFAULT_SETTINGS):
    k = ops.n - 1
    d1, d2 = 2 * k + 1, 2 * k
    G1 = np.zeros((ops.m, d1, d1))
    G2 = np.zeros((ops.m, d2, d2))
    for e in range(ops.m):
        G1[e, :k, k:] = ops.B_ops[e]
        G1[e, k:, :k] = ops.B_ops[e].T
        G2[e, :k, :k] = ops.S_ops[e]
    solver = DykstraLMI([G1, G2], np.ones(ops.m, bool), settings)
    I = np.eye(k)
    state = {"x": np.full(ops.m, 1.0 / max(ops.m, 1)), "sweeps": 0}

    def constants(t):
        C1 = np.zeros((d1, d1))
        C1[:k, :k] = (1.0 + t) * I
        C1[k:, k:] = np.diag(1.0 / ops.h_lo)
        C2 = np.zeros((d2, d2))
        C2[:k, :k] = -(1.0 - 0.5 * t) * I
        C2[:k, k:] = C2[k:, :k] = t / SQRT8 * I
        C2[k:, k:] = I
        return [C1, C2]

    def feasible_at(t):
        # exact and scale-free: some multiple of x meets both LMIs at level t
        return lambda x: ops.ratio(x) >= c_plus(t) / np.sqrt(1.0 + t)

    def probe(t):
        ok, x, used = solver.probe(constants(t), state["x"], accept=feasible_at(t))
        state["sweeps"] += used
        if ok:
            x = x * (c_plus(t) / ops.lam_min_S(x))
            state["x"] = x
        return ok, x

    try:
        t, x, steps = _bisect(probe, 0.0, P4_T_MAX, settings)
    except NoFeasiblePoint as exc:
        raise NoFeasiblePoint(f"P4 infeasible: {exc}") from None
    return x, SolveInfo("projection", "p4", "optimal", iterations=state["sweeps"],
                        probes=steps, objective=t)


def ratio_projection(ops, settings=DEFAULT_SETTINGS):
    k = ops.n - 1
    d1 = 2 * k + 1
    G1 = np.zeros((ops.m, d1, d1))
    G2 = np.zeros((ops.m, k, k))
    for e in range(ops.m):
        G1[e, :k, k:] = ops.B_ops[e]
        G1[e, k:, :k] = ops.B_ops[e].T
        G2[e] = ops.S_ops[e]
    solver = DykstraLMI([G1, G2], np.ones(ops.m, bool), settings)
    C1 = np.zeros((d1, d1))
    C1[:k, :k] = np.eye(k)
    C1[k:, k:] = np.diag(1.0 / ops.h_lo)
    state = {"x": np.full(ops.m, 1.0 / max(ops.m, 1)), "sweeps": 0}

    def probe(neg_s):
        ok, x, used = solver.probe([C1, neg_s * np.eye(k)], state["x"])
        state["sweeps"] += used
        if ok:
            state["x"] = x
        return ok, x

    # level is -s: minimise -s over [-1, 0)
    lvl, x, steps = _bisect(probe, -1.0, -1e-6, settings)
    return x, SolveInfo("projection", "ratio", "optimal", iterations=state["sweeps"],
                        probes=steps, objective=-lvl)


def p5_projection(n, pairs, settings=DEFAULT_SETTINGS):
    R = reducer(n)
    k = n - 1
    G1 = np.zeros((len(pairs), k, k))
    for r, (i, j) in enumerate(pairs):
        v = R[i] - R[j]
        G1[r] = np.outer(v, v)
    G2 = -G1
    solver = DykstraLMI([G1, G2], np.zeros(len(pairs), bool), settings)
    I = np.eye(k)
    state = {"x": np.zeros(len(pairs)), "sweeps": 0}

    def probe(eps):
        ok, x, used = solver.probe([-(1.0 - eps) * I, (1.0 + eps) * I], state["x"])
        state["sweeps"] += used
        if ok:
            state["x"] = x
        return ok, x

    eps, a, steps = _bisect(probe, 0.0, 1.0 - 1e-6, settings)
    D = np.zeros((len(pairs), n))
    for r, (i, j) in enumerate(pairs):
        D[r, i], D[r, j] = 1.0, -1.0
    A = D.T @ (a[:, None] * D)
    return 0.5 * (A + A.T), SolveInfo("projection", "p5", "optimal",
                                      iterations=state["sweeps"], probes=steps, objective=eps)
