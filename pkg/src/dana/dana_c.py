"""Continuous-time approximate Newton saddle-point dynamics with box limits.

For ``x = x0 + L z`` and ``P(z) = [x_lo - x; x - x_hi]`` the Lagrangian is
``g(z) + lam^T P(z)``. The flow

    z' = -A_q(z) (L grad f(x) + [-L  L] lam),    lam' = [P(z)]^+_lam

is integrated with projected forward Euler. ``V_Q`` (the ``A_q^{-1}``
weighted distance to the saddle point) certifies convergence.

:func:`integrate_robust` implements the variant in which both ``x`` and
``z`` are free and the demand is enforced through ``x + L z = d_bar``.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_positive, check_vector
from .exceptions import InvalidInput, StateCorruption, StepTooLarge
from .problem import DispatchProblem
from .reference import oracle as default_oracle
from .trace import DANA_C_COLUMNS, ROBUST_COLUMNS, SolverTrace

NEG_TOL = 1e-12
VQ_PATIENCE = 100
VQ_SLACK = 1e-6


def _mat(L):
    return np.asarray(getattr(L, "matrix", L), dtype=float)


def box_residual(p, x):
    """``P = [x_lo - x; x - x_hi]``; nonpositive iff ``x`` is in the box."""
    return np.concatenate([p.x_lo - x, x - p.x_hi])


def lagrangian_grads(p, L, z, lam):
    """``(grad_z L, grad_lam L) = (L (grad f - lam_lo + lam_hi), P(z))``."""
    Lm = _mat(L)
    x = p.x0 + Lm @ z
    n = p.n
    gz = Lm @ (p.grad(x) - lam[:n] + lam[n:])
    return gz, box_residual(p, x)


def projected_dual_rate(u, lam):
    """``[u]^+_lam``: ``u_i`` where ``lam_i > 0``, else ``max(u_i, 0)``.

    Raises
    ------
    StateCorruption
        If some ``lam_i < -1e-12``.
    """
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < -NEG_TOL):
        raise StateCorruption(f"dual variable negative: min = {lam.min():.3g}")
    return np.where(lam > 0, u, np.maximum(u, 0.0))


def apply_Aq(Lm, h, v, q):
    """``sum_{p<=q} (I - L H L)^p v`` by repeated matrix-vector products."""
    y = v
    acc = v.copy()
    for _ in range(q):
        y = y - Lm @ (h * (Lm @ y))
        acc += y
    return acc


@dataclass(frozen=True)
class AqSpectrum:
    """Eigenvectors ``W`` of ``L H L`` and the eigenvalues of ``A_q^{-1}``.

    With ``eta`` the eigenvalues of ``I - L H L``, ``A_q^{-1}`` has
    eigenvalues ``1 / sum_{p<=q} eta^p``: ``(1 - eta)/(1 - eta^{q+1})`` and
    ``1/(q+1)`` on the ``1`` direction.
    """

    W: np.ndarray
    inv_eigs: np.ndarray

    @classmethod
    def build(cls, L, h, q):
        Lm = _mat(L)
        q = check_int(q, "q", minimum=0)
        K = Lm @ (h[:, None] * Lm)
        mu, W = np.linalg.eigh(0.5 * (K + K.T))
        eta = 1.0 - mu
        series = np.sum(eta[None, :] ** np.arange(q + 1)[:, None], axis=0)
        if np.any(series <= 0):
            raise InvalidInput("A_q is not positive definite for this Laplacian")
        return cls(W, 1.0 / series)

    def quad(self, v):
        c = self.W.T @ v
        return float(np.sum(self.inv_eigs * c * c))


@dataclass
class LyapunovRecord:
    value: float
    primal: float
    dual: float


def lyapunov_vq(z, lam, z_star, lam_star, spectrum):
    """``V_Q = (|z - z*|^2_{A_q^{-1}} + |lam - lam*|^2) / 2``."""
    primal = spectrum.quad(np.asarray(z) - z_star)
    dual = float(np.sum((np.asarray(lam) - lam_star) ** 2))
    return LyapunovRecord(0.5 * (primal + dual), primal, dual)


def kkt_residuals(p, L, z, lam):
    """Stationarity, primal and dual feasibility, complementary slackness.

    All are infinity-norm residuals and vanish exactly at a KKT point.
    """
    gz, P = lagrangian_grads(p, L, z, lam)
    return {
        "stationarity": float(np.max(np.abs(gz))),
        "primal": float(max(0.0, np.max(P))),
        "dual": float(max(0.0, -np.min(lam))),
        "compslack": float(np.max(np.abs(lam * P))),
    }


@dataclass
class SaddleResult:
    """Final state and monitoring output of :func:`integrate`."""

    z: np.ndarray
    lam: np.ndarray
    x: np.ndarray
    t: float
    trace: SolverTrace
    vq: np.ndarray
    kkt: dict
    z_star: np.ndarray = None
    lam_star: np.ndarray = None
    info: dict = field(default_factory=dict)


def _check_box_problem(p, L):
    if not isinstance(p, DispatchProblem):
        raise InvalidInput("p must be a DispatchProblem")
    if not p.has_box:
        raise InvalidInput("continuous-time dynamics need box limits")
    Lm = _mat(L)
    if Lm.shape != (p.n, p.n):
        raise InvalidInput(f"L has shape {Lm.shape}, expected {(p.n, p.n)}")
    return Lm


def integrate(p, L, q=0, h=1e-3, T=50.0, *, lam0=None, z0=None, oracle="auto",
              approx_quadratic=False, record_every=100, check_vq=True):
    """Projected forward-Euler integration of the saddle-point flow.

    Parameters
    ----------
    p : DispatchProblem
        Must have box limits.
    L : array_like or WeightedLaplacian
    q : int
        Neumann truncation order of ``A_q``.
    h, T : float
        Step and horizon.
    lam0 : array_like, shape (2n,), optional
        Initial duals (lower block first); default zero.
    z0 : array_like, optional
        Initial ``z``; default zero.
    oracle : "auto", None or OracleSolution
        Saddle point used for errors and ``V_Q``. ``"auto"`` calls
        :func:`dana.reference.oracle`.
    approx_quadratic : bool
        Build ``A_q`` from the fixed Hessian ``(delta + Delta) / 2`` instead
        of ``H(x)``.
    record_every : int
        Trace thinning; ``V_Q`` is still stored for every step.
    check_vq : bool
        Raise :class:`StepTooLarge` when ``V_Q`` grows by more than
        ``1e-6 h`` for 100 consecutive steps.

    Returns
    -------
    SaddleResult
    """
    Lm = _check_box_problem(p, L)
    q = check_int(q, "q", minimum=0)
    h = check_positive(h, "h")
    T = check_positive(T, "T")
    n = p.n
    z = np.zeros(n) if z0 is None else check_vector(z0, "z0", n).copy()
    lam = np.zeros(2 * n) if lam0 is None else check_vector(lam0, "lam0", 2 * n).copy()
    if np.any(lam < 0):
        raise InvalidInput("initial duals must be nonnegative")
    sol = default_oracle(p) if oracle == "auto" else oracle
    fixed_h = None
    if approx_quadratic:
        fixed_h = 0.5 * (p.delta + p.Delta)
    elif p.is_quadratic:
        fixed_h = p.a.copy()
    spectrum = None
    z_star = lam_star = None
    if sol is not None:
        z_star = sol.z_star(p, Lm, z)
        lam_star = sol.lam
        if fixed_h is not None:
            spectrum = AqSpectrum.build(Lm, fixed_h, q)

    def vq_now(x):
        if sol is None:
            return np.nan
        spec = spectrum or AqSpectrum.build(Lm, p.hess(x), q)
        return lyapunov_vq(z, lam, z_star, lam_star, spec).value

    steps = int(round(T / h))
    trace = SolverTrace(DANA_C_COLUMNS)
    vq = np.empty(steps + 1)
    rising = 0
    start = time.perf_counter()
    x = p.x0 + Lm @ z
    for k in range(steps + 1):
        v = vq_now(x)
        vq[k] = v
        if k > 0 and check_vq and sol is not None:
            rising = rising + 1 if v - vq[k - 1] > VQ_SLACK * h else 0
            if rising >= VQ_PATIENCE:
                raise StepTooLarge(f"V_Q increased for {VQ_PATIENCE} steps (h={h:g})")
        if k % record_every == 0 or k == steps:
            _record(trace, p, x, z, lam, k * h, sol, v, Lm)
        if k == steps:
            break
        hk = fixed_h if fixed_h is not None else p.hess(x)
        gz = Lm @ (p.grad(x) - lam[:n] + lam[n:])
        zdot = -apply_Aq(Lm, hk, gz, q)
        lamdot = projected_dual_rate(box_residual(p, x), lam)
        z = z + h * zdot
        lam = np.maximum(lam + h * lamdot, 0.0)
        x = p.x0 + Lm @ z
        if not np.all(np.isfinite(z)):
            raise StepTooLarge(f"state became non-finite at t={k * h:g}")
    kkt = kkt_residuals(p, Lm, z, lam)
    info = {"elapsed_s": time.perf_counter() - start, "steps": steps}
    return SaddleResult(z, lam, x, steps * h, trace, vq, kkt, z_star, lam_star, info)


def _record(trace, p, x, z, lam, t, sol, v, Lm):
    P = box_residual(p, x)
    row = dict(t=t, V_Q=v, feas_box=max(0.0, float(np.max(P))),
               feas_sum=abs(float(x.sum()) - p.d), compslack=float(np.max(np.abs(lam * P))))
    if sol is not None:
        row.update(primal_err=float(np.linalg.norm(x - sol.x)),
                   dual_err=float(np.linalg.norm(lam - sol.lam)),
                   obj_gap=p.value(x) - sol.f_star)
    trace.append(**row)


@dataclass(frozen=True)
class RobustGains:
    """Gains of the robust flow.

    ``rho`` weights the augmentation ``rho/2 |x + L z - d_bar|^2``; the
    others scale the ``nu``, ``z`` and ``lam`` rates.
    """

    rho: float = 30.0
    k_nu: float = 30.0
    k_z: float = 20.0
    k_lam: float = 30.0

    def __post_init__(self):
        check_positive(self.k_nu, "k_nu")
        check_positive(self.k_z, "k_z")
        check_positive(self.k_lam, "k_lam")
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise InvalidInput("rho must be finite and nonnegative")


@dataclass
class RobustResult:
    x: np.ndarray
    z: np.ndarray
    nu: np.ndarray
    lam: np.ndarray
    trace: SolverTrace
    times: np.ndarray
    eq_violation: np.ndarray
    err_to_opt: np.ndarray
    injections: list
    gains: RobustGains = None


def integrate_robust(p, L, d_bar=None, q=0, h=1e-3, T=100.0, *, gains=None, perturbations=(),
                     seed=None, x_init=None, z_init=None, record_every=100, oracle="auto"):
    """Saddle-point flow for the demand split ``x + L z = d_bar``.

    Projected gradient descent-ascent on the augmented Lagrangian

        f(x) + nu^T r + rho/2 |r|^2 + lam^T [x_lo - x; x - x_hi],
        r = x + L z - d_bar,

    with unit gain on ``x`` and gains ``k_z, k_nu, k_lam`` on the other
    blocks. The augmentation does not move the saddle point but damps the
    equality violation at rate about ``rho``. ``q > 0`` preconditions the
    ``z`` block with ``A_q`` built from ``H(x)``.

    Parameters
    ----------
    d_bar : array_like, optional
        Local demands with ``sum(d_bar) = d``; default ``(d/n) 1``.
    gains : RobustGains or dict, optional
    perturbations : sequence of (time, amplitude)
        At each time, uniform noise on ``[-amplitude, amplitude]`` is added
        to every entry of ``x`` and ``z``.
    seed : int, optional
        Noise seed.
    x_init, z_init : array_like, optional
        Initial primal state; ``x_init`` need not meet the demand.

    Returns
    -------
    RobustResult
        ``eq_violation`` is ``|x + L z - d_bar|_inf``, sampled every step.
        ``err_to_opt`` is the distance to the saddle point in the
        gain-weighted norm ``|dx|^2 + |dz|^2/k_z + |dnu|^2/k_nu +
        |dlam|^2/k_lam`` (``z*`` taken with the mean of the current ``z``),
        which the continuous flow with ``q = 0`` never increases.
    """
    Lm = _check_box_problem(p, L)
    n = p.n
    q = check_int(q, "q", minimum=0)
    h = check_positive(h, "h")
    if gains is None:
        gains = RobustGains()
    elif isinstance(gains, dict):
        gains = RobustGains(**gains)
    d_bar = np.full(n, p.d / n) if d_bar is None else check_vector(d_bar, "d_bar", n)
    if abs(d_bar.sum() - p.d) > 1e-9 * max(1.0, abs(p.d)):
        raise InvalidInput("d_bar must sum to d")
    events = sorted((float(t), float(a)) for t, a in perturbations)
    rng = np.random.default_rng(seed)
    x = p.x0.copy() if x_init is None else check_vector(x_init, "x_init", n).copy()
    z = np.zeros(n) if z_init is None else check_vector(z_init, "z_init", n).copy()
    nu = np.zeros(n)
    lam = np.zeros(2 * n)
    sol = default_oracle(p) if oracle == "auto" else oracle
    steps = int(round(T / h))
    ev_steps = {int(round(t / h)): a for t, a in events}
    trace = SolverTrace(ROBUST_COLUMNS)
    eq = np.empty(steps + 1)
    err = np.empty(steps + 1)
    injections = []

    # nu* = -nu_oracle 1; z* solves L z* = d_bar - x* with the mean of the current z
    zs = np.linalg.pinv(Lm) @ (d_bar - sol.x) if sol is not None else None

    def error():
        if sol is None:
            return np.nan
        dz = z - z.mean() - zs
        return float(np.sqrt(np.sum((x - sol.x) ** 2) + np.sum(dz ** 2) / gains.k_z
                             + np.sum((nu + sol.nu) ** 2) / gains.k_nu
                             + np.sum((lam - sol.lam) ** 2) / gains.k_lam))

    for k in range(steps + 1):
        if k in ev_steps:
            amp = ev_steps[k]
            x = x + rng.uniform(-amp, amp, n)
            z = z + rng.uniform(-amp, amp, n)
            injections.append(k)
        r = x + Lm @ z - d_bar
        eq[k] = float(np.max(np.abs(r)))
        err[k] = error()
        if k % record_every == 0 or k == steps:
            trace.append(t=k * h, eq_violation=eq[k], err_to_opt=err[k],
                         feas_sum=abs(float(x.sum()) - p.d))
        if k == steps:
            break
        P = box_residual(p, x)
        m = nu + gains.rho * r
        xdot = -(p.grad(x) + m - lam[:n] + lam[n:])
        gz = Lm @ m
        zdot = -gains.k_z * (apply_Aq(Lm, p.hess(x), gz, q) if q else gz)
        lamdot = projected_dual_rate(P, lam)
        x = x + h * xdot
        z = z + h * zdot
        nu = nu + h * gains.k_nu * r
        lam = np.maximum(lam + h * gains.k_lam * lamdot, 0.0)
        if not np.all(np.isfinite(x)) or eq[k] > 1e12:
            raise StepTooLarge(f"robust flow diverged at t={k * h:g} (h={h:g})")
    times = np.arange(steps + 1) * h
    return RobustResult(x, z, nu, lam, trace, times, eq, err,
                        [k * h for k in injections], gains)


class DanaC(BaseEstimator):
    """Estimator interface to :func:`integrate`.

    Parameters
    ----------
    q : int
    h : float
        Euler step.
    T : float
        Horizon.
    approx_quadratic : bool
    record_every : int

    Attributes
    ----------
    x_, z_, lam_ : ndarray
        Final state.
    kkt_ : dict
        Final KKT residuals.
    trace_ : SolverTrace
    vq_ : ndarray
        ``V_Q`` at every step (NaN without an oracle).
    """

    def __init__(self, q=0, h=1e-3, T=50.0, approx_quadratic=False, record_every=100):
        self.q = q
        self.h = h
        self.T = T
        self.approx_quadratic = approx_quadratic
        self.record_every = record_every

    def fit(self, problem, laplacian, lam0=None, oracle="auto"):
        res = integrate(problem, laplacian, self.q, self.h, self.T, lam0=lam0, oracle=oracle,
                        approx_quadratic=self.approx_quadratic,
                        record_every=self.record_every)
        self.result_ = res
        self.x_, self.z_, self.lam_ = res.x, res.z, res.lam
        self.kkt_ = res.kkt
        self.trace_ = res.trace
        self.vq_ = res.vq
        return self

    def predict(self, problem=None):
        check_is_fitted(self, "x_")
        return self.x_
