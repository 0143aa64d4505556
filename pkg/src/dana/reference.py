"""Ground-truth solvers and the first-order baseline.

The oracles solve the centralized dispatch problem directly from its KKT
conditions ``f_i'(x_i) - lam_lo_i + lam_hi_i = nu``:

* :func:`solve_equality_qp` - closed form for quadratic costs, no boxes.
* :func:`solve_box_qp_bruteforce` - enumerates all ``3^n`` free/lower/upper
  patterns (small ``n``) and keeps the unique consistent one.
* :func:`solve_box_waterfill` - exact breakpoint search for quadratic costs
  with boxes, any ``n``.
* :func:`solve_separable` - nested root finding for any strictly convex
  separable cost, with or without boxes.
"""

import itertools
import json
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._validation import check_positive
from .exceptions import InfeasibleOrDegenerate, InvalidInput, StepSizeTooLarge
from .problem import DispatchProblem
from .trace import DANA_D_COLUMNS, SolverTrace

FREE, LOWER, UPPER = 0, 1, 2
MAX_BRUTEFORCE_N = 12


@dataclass
class OracleSolution:
    """Optimizer with multipliers.

    ``lam`` stacks the lower-box then upper-box multipliers, matching
    ``P(z) = [x_lo - x; x - x_hi]``.
    """

    x: np.ndarray
    nu: float
    lam_lo: np.ndarray
    lam_hi: np.ndarray
    active: np.ndarray
    f_star: float
    method: str

    @property
    def lam(self):
        return np.concatenate([self.lam_lo, self.lam_hi])

    def z_star(self, p, L, z_ref=None):
        """Reduced optimizer with ``1^T z* = 1^T z_ref`` (default ``z_ref = 0``)."""
        Lm = np.asarray(getattr(L, "matrix", L), dtype=float)
        z = np.linalg.pinv(Lm) @ (self.x - p.x0)
        shift = 0.0 if z_ref is None else float(np.mean(z_ref))
        return z - z.mean() + shift

    def to_dict(self):
        names = {FREE: "free", LOWER: "lower", UPPER: "upper"}
        return {"x": self.x.tolist(), "nu": self.nu, "lam": self.lam.tolist(),
                "active": [names[int(s)] for s in self.active], "f_star": self.f_star,
                "method": self.method}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _check(p):
    if not isinstance(p, DispatchProblem):
        raise InvalidInput("p must be a DispatchProblem")
    return p


def _finish(p, x, nu, method):
    g = p.grad(x)
    lam_lo = np.zeros(p.n)
    lam_hi = np.zeros(p.n)
    active = np.full(p.n, FREE)
    if p.has_box:
        span = np.maximum(1.0, np.abs(p.x_hi - p.x_lo))
        at_lo = np.abs(x - p.x_lo) <= 1e-12 * span
        at_hi = np.abs(x - p.x_hi) <= 1e-12 * span
        x = np.where(at_lo, p.x_lo, np.where(at_hi, p.x_hi, x))
        lam_lo = np.where(at_lo, np.maximum(g - nu, 0.0), 0.0)
        lam_hi = np.where(at_hi, np.maximum(nu - g, 0.0), 0.0)
        active = np.where(at_lo, LOWER, np.where(at_hi, UPPER, FREE))
    return OracleSolution(x, float(nu), lam_lo, lam_hi, active, p.value(x), method)


def solve_equality_qp(p):
    """Closed form ``x = (nu - b) / a``, ``nu = (d + sum b/a) / sum 1/a``.

    Boxes are ignored; costs must be quadratic.
    """
    p = _check(p)
    if not p.is_quadratic:
        raise InvalidInput("closed form needs quadratic costs (c = 0)")
    inv = 1.0 / p.a
    nu = (p.d + np.sum(p.b * inv)) / np.sum(inv)
    x = (nu - p.b) * inv
    return _finish(p.without_box(), x, nu, "closed-form")


def solve_box_qp_bruteforce(p, chunk=50_000):
    """Active-set enumeration for quadratic costs with boxes (``n <= 12``).

    Every pattern in ``{free, lower, upper}^n`` fixes the bounded agents,
    solves the free ones in closed form and is kept if the free values lie
    inside their boxes and the multipliers are nonnegative.

    Raises
    ------
    InfeasibleOrDegenerate
        If no pattern is consistent.
    """
    p = _check(p)
    if not p.has_box or not p.is_quadratic:
        raise InvalidInput("brute force needs quadratic costs with box limits")
    if p.n > MAX_BRUTEFORCE_N:
        raise InvalidInput(f"brute force limited to n <= {MAX_BRUTEFORCE_N}")
    n = p.n
    inv = 1.0 / p.a
    tol = 1e-10 * max(1.0, float(np.max(np.abs(np.r_[p.x_lo, p.x_hi]))))
    found = []
    codes_iter = itertools.product((FREE, LOWER, UPPER), repeat=n)
    while True:
        block = np.array(list(itertools.islice(codes_iter, chunk)), dtype=np.int8)
        if block.size == 0:
            break
        free = block == FREE
        lo = block == LOWER
        hi = block == UPPER
        fixed_sum = lo @ p.x_lo + hi @ p.x_hi
        w = free @ inv
        with np.errstate(divide="ignore", invalid="ignore"):
            nu = (p.d - fixed_sum + free @ (p.b * inv)) / w
        x = np.where(free, (nu[:, None] - p.b) * inv, np.where(lo, p.x_lo, p.x_hi))
        g = p.a * x + p.b
        ok = np.isfinite(nu)
        ok &= np.all(~free | ((x >= p.x_lo - tol) & (x <= p.x_hi + tol)), axis=1)
        ok &= np.all(~lo | (g - nu[:, None] >= -tol), axis=1)
        ok &= np.all(~hi | (nu[:, None] - g >= -tol), axis=1)
        for r in np.flatnonzero(ok):
            found.append((block[r], x[r], nu[r]))
    if not found:
        raise InfeasibleOrDegenerate("no active set satisfies the KKT conditions")
    xs = np.array([f[1] for f in found])
    if np.max(np.ptp(xs, axis=0)) > 1e-8:
        raise InfeasibleOrDegenerate("inconsistent KKT points (degenerate instance)")
    codes, x, nu = found[0]
    sol = _finish(p, x.astype(float), nu, "bruteforce")
    sol.active = codes.astype(int)
    return sol


def solve_box_waterfill(p):
    """Exact optimizer for quadratic costs with boxes (any ``n``).

    ``sum clip((nu - b)/a, lo, hi)`` is piecewise linear and nondecreasing
    in ``nu``; the crossing with ``d`` is located between consecutive
    breakpoints and solved exactly on that segment.
    """
    p = _check(p)
    if not p.has_box or not p.is_quadratic:
        raise InvalidInput("water-filling needs quadratic costs with box limits")

    def total(nu):
        return float(np.sum(np.clip((nu - p.b) / p.a, p.x_lo, p.x_hi)))

    bps = np.unique(np.r_[p.a * p.x_lo + p.b, p.a * p.x_hi + p.b])
    vals = np.array([total(v) for v in bps])
    k = int(np.searchsorted(vals, p.d))
    k = min(max(k, 1), len(bps) - 1)
    lo_nu, hi_nu = bps[k - 1], bps[k]
    s_lo, s_hi = vals[k - 1], vals[k]
    nu = lo_nu if s_hi == s_lo else lo_nu + (p.d - s_lo) * (hi_nu - lo_nu) / (s_hi - s_lo)
    x = np.clip((nu - p.b) / p.a, p.x_lo, p.x_hi)
    return _finish(p, x, nu, "waterfill")


def _inverse_marginal(p, nu):
    """Solve ``f_i'(x_i) = nu`` for every agent (``f_i'`` strictly increasing)."""
    if p.is_quadratic:
        return (nu - p.b) / p.a
    x = np.empty(p.n)
    for i in range(p.n):
        a, b, c, th = p.a[i], p.b[i], p.c[i], p.theta[i]
        lo, hi = (nu - b - c) / a, (nu - b + c) / a
        if hi - lo <= 0:
            x[i] = lo
            continue
        fp = lambda t: a * t + b + c * np.cos(t + th) - nu  # noqa: E731
        x[i] = brentq(fp, lo - 1e-12, hi + 1e-12, xtol=1e-15, rtol=1e-15)
    return x


def solve_separable(p):
    """Optimizer for any strictly convex separable cost (boxes optional)."""
    p = _check(p)
    lo_b = p.x_lo if p.has_box else None
    hi_b = p.x_hi if p.has_box else None

    def alloc(nu):
        x = _inverse_marginal(p, nu)
        return np.clip(x, lo_b, hi_b) if p.has_box else x

    # f_i' lies in [a x + b - c, a x + b + c], which brackets nu
    w = np.sum(1.0 / p.a)
    span = np.max(p.c) + 1.0
    nu_lo = (p.d + np.sum((p.b - span) / p.a)) / w
    nu_hi = (p.d + np.sum((p.b + span) / p.a)) / w
    if p.has_box:
        nu_lo = min(nu_lo, float(np.min(p.a * p.x_lo + p.b - span)))
        nu_hi = max(nu_hi, float(np.max(p.a * p.x_hi + p.b + span)))
    nu = brentq(lambda v: alloc(v).sum() - p.d, nu_lo, nu_hi, xtol=1e-15, rtol=1e-15)
    x = alloc(nu)
    # one Newton polish of the free coordinates for full precision
    free = np.ones(p.n, bool) if not p.has_box else (x > p.x_lo) & (x < p.x_hi)
    if np.any(free):
        h = p.hess(x)
        r = p.grad(x) - nu
        dnu = (p.d - x.sum() + np.sum(r[free] / h[free])) / np.sum(1.0 / h[free])
        x = x.copy()
        x[free] += (dnu - r[free]) / h[free]
        nu += dnu
    return _finish(p, x, nu, "separable")


def oracle(p):
    """Pick the exact solver matching the problem structure."""
    p = _check(p)
    if p.is_quadratic:
        return solve_box_waterfill(p) if p.has_box else solve_equality_qp(p)
    return solve_separable(p)


def run_dgd(p, L, alpha, *, max_iters=100_000, tol=1e-10, x_star=None):
    """Distributed gradient descent ``x+ = x - alpha L (L grad f(x))``.

    This is plain gradient descent on ``g(z) = f(x0 + L z)``: ``z`` moves
    along ``-L grad f`` and ``x`` along ``L`` times that step.

    Returns
    -------
    x : ndarray
    n_iter : int
    trace : SolverTrace
        Same columns as the approximate Newton runs.
    """
    p = _check(p)
    Lm = np.asarray(getattr(L, "matrix", L), dtype=float)
    alpha = check_positive(alpha, "alpha")
    x = p.x0.copy()
    trace = SolverTrace(DANA_D_COLUMNS)
    start = time.perf_counter()
    rising = 0
    for k in range(max_iters + 1):
        gg = Lm @ p.grad(x)
        gnorm = float(np.max(np.abs(gg)))
        gap = p.conserving_increment(x_star, x - x_star) if x_star is not None else np.nan
        trace.append(iter=k, obj_gap=gap, grad_norm=gnorm, feas_err=abs(x.sum() - p.d),
                     msgs=2 * k, elapsed_s=time.perf_counter() - start)
        if gnorm <= tol or k == max_iters:
            break
        # same operation order as the q = 0 approximate Newton step
        x_new = x + Lm @ (alpha * -gg)
        rising = rising + 1 if p.conserving_increment(x, x_new - x) > 0 else 0
        if rising >= 10 or not np.all(np.isfinite(x_new)):
            raise StepSizeTooLarge(f"gradient descent diverged (alpha={alpha:.3g})")
        x = x_new
    return x, k, trace
