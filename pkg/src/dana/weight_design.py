"""Offline edge-weight design for the approximate Newton Laplacian.

The pipeline is: solve the convex LMI program for nonnegative edge weights
``X`` (``L0 = E^T X E``), then rescale ``L0`` so that the reduced Hessian
spectrum at the two Hessian bounds is balanced around one. A companion
program gives the best achievable ``eps`` for any matrix with the same
sparsity, which serves as a lower bound on the design.
"""

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _sdp
from ._validation import check_int, check_vector
from .exceptions import InvalidInput, NoFeasiblePoint
from .graph import GraphTopology, WeightedLaplacian, _jsonable, laplacian_from_nonneg
from .reduction import EpsilonMetric, epsilon_of, reduced_hessian, reducer
from .settings import DEFAULT_SETTINGS

log = logging.getLogger(__name__)

BACKENDS = ("cvxpy", "projection")
MODES = ("local", "global")


@dataclass
class DesignResult:
    """Output of :func:`design` / :func:`post_scale`.

    Attributes
    ----------
    L_star : WeightedLaplacian
        Post-scaled Laplacian ``beta * L0``.
    eps_Lstar : EpsilonMetric
        ``eps`` of ``L_star`` at the design bounds.
    beta : float
        Post-scaling factor.
    eps_pre : float
        ``eps`` of ``L0`` before scaling.
    diagnostics : dict
        Solver status, formulation, LMI residuals, timings.
    eps_A : float or None
        Sparsity lower bound when requested.
    """

    L_star: WeightedLaplacian
    eps_Lstar: EpsilonMetric
    beta: float
    eps_pre: float
    diagnostics: dict = field(default_factory=dict)
    eps_A: float = None

    @property
    def epsilon(self):
        return self.eps_Lstar.value

    def to_dict(self):
        out = {
            "n": self.L_star.n,
            "edges": [list(e) for e in self.L_star.graph.edges],
            "L": self.L_star.matrix.tolist(),
            "weights": self.L_star.weights.tolist(),
            "epsilon": self.epsilon,
            "beta": self.beta,
            "eps_pre": self.eps_pre,
            "mu_min": self.eps_Lstar.mu_min,
            "mu_max": self.eps_Lstar.mu_max,
            "diagnostics": _jsonable(self.diagnostics),
        }
        if self.eps_A is not None:
            out["eps_A"] = self.eps_A
        return out

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass
class LowerBoundResult:
    """Solution of the sparsity-constrained lower-bound program.

    ``A_star`` is symmetric PSD with zero row sums and the requested
    hop sparsity; ``eps_A = max |1 - mu_i(J T^T A T J^T)|``.
    """

    eps_A: float
    A_star: np.ndarray
    hops: int
    diagnostics: dict = field(default_factory=dict)


def _bounds(g, h_lo, h_hi):
    if not isinstance(g, GraphTopology):
        raise InvalidInput("g must be a GraphTopology")
    if g.n < 2:
        raise InvalidInput("weight design needs at least two nodes")
    h_lo = check_vector(h_lo, "h_lo", g.n, positive=True)
    h_hi = h_lo.copy() if h_hi is None else check_vector(h_hi, "h_hi", g.n, positive=True)
    if np.any(h_lo > h_hi):
        raise InvalidInput("need h_lo <= h_hi componentwise")
    return h_lo, h_hi


def _operators(g, h_lo, h_hi):
    return _sdp.EdgeOperators(g.n, g.incidence(), reducer(g.n), h_lo, h_hi)


def lmi_residuals(g, weights, eps_minus, eps_plus, h_lo, h_hi=None):
    """Smallest eigenvalue of each of the two design LMI blocks."""
    h_lo, h_hi = _bounds(g, h_lo, h_hi)
    ops = _operators(g, h_lo, h_hi)
    x = check_vector(weights, "weights", g.m)
    b11, b12 = ops.p4_blocks(x, eps_minus, eps_plus)
    return float(np.linalg.eigvalsh(b11)[0]), float(np.linalg.eigvalsh(b12)[0])


def solve_p4(g, h_lo, h_hi=None, *, backend="cvxpy", settings=DEFAULT_SETTINGS):
    """Edge weights minimizing ``max(eps-, eps+)`` under the convex LMIs.

    Parameters
    ----------
    g : GraphTopology
    h_lo, h_hi : array_like, shape (n,)
        Diagonal Hessian bounds ``delta_i <= H_ii <= Delta_i``.
    backend : {"cvxpy", "projection"}

    Returns
    -------
    weights : ndarray, shape (m,)
        Nonnegative edge weights.
    eps_minus, eps_plus : float
        The smallest values making both LMIs hold at ``weights``
        (recomputed from eigenvalues, not read off the solver).
    info : dict
        Backend diagnostics.

    Raises
    ------
    NoFeasiblePoint
        If the program is infeasible for every ``eps`` in ``[0, 2]``.
    """
    h_lo, h_hi = _bounds(g, h_lo, h_hi)
    if backend not in BACKENDS:
        raise InvalidInput(f"unknown backend {backend!r}; choose from {BACKENDS}")
    ops = _operators(g, h_lo, h_hi)
    solve = _sdp.p4_cvxpy if backend == "cvxpy" else _sdp.p4_projection
    x, info = solve(ops, settings)
    em, ep = ops.p4_objective(x)
    if not np.isfinite(ep):
        raise NoFeasiblePoint("returned weights violate the eps+ constraint for every eps+")
    res = _lmi_check(ops, x, em, ep)
    return x, em, ep, {**info.as_dict(), "lmi_min_eig": res}


def _lmi_check(ops, x, em, ep):
    b11, b12 = ops.p4_blocks(x, em, ep)
    return min(float(np.linalg.eigvalsh(b11)[0]), float(np.linalg.eigvalsh(b12)[0]))


def solve_ratio(g, h_lo, h_hi=None, *, backend="cvxpy", settings=DEFAULT_SETTINGS):
    """Scale-free fallback: maximize ``lambda_min(S(X))`` with ``||B(X)|| <= 1``.

    ``S(X) = R^T (sqrt(H_hi) L + L sqrt(H_hi)) R / 2`` and
    ``B(X) = R^T L H_lo^{1/2}``. Its maximizer is a positive multiple of the
    LMI design whenever that program is feasible, and it stays solvable on
    graphs where it is not.
    """
    h_lo, h_hi = _bounds(g, h_lo, h_hi)
    ops = _operators(g, h_lo, h_hi)
    solve = _sdp.ratio_cvxpy if backend == "cvxpy" else _sdp.ratio_projection
    x, info = solve(ops, settings)
    return x, info.as_dict()


def post_scale(L0, h_lo, h_hi=None, settings=DEFAULT_SETTINGS):
    """Rescale ``L0`` so the reduced spectrum is centred on one.

    ``beta = sqrt(2 / (mu_1(M_lo) + mu_{n-1}(M_hi)))`` with ``M`` evaluated
    for ``L0``; after scaling ``1 - mu_1 = -(1 - mu_{n-1})`` and
    ``eps = (mu_{n-1} - mu_1) / (mu_{n-1} + mu_1) < 1``.

    Raises
    ------
    InvalidInput
        If ``L0`` is zero or its reduced Hessian is singular.
    """
    if not isinstance(L0, WeightedLaplacian):
        raise InvalidInput("L0 must be a WeightedLaplacian")
    h_lo, h_hi = _bounds(L0.graph, h_lo, h_hi)
    if not np.any(L0.matrix):
        raise InvalidInput("cannot post-scale a zero Laplacian")
    pre = epsilon_of(L0.matrix, h_lo, h_hi)
    if pre.mu_min <= settings.psd_tol * max(1.0, pre.mu_max):
        raise InvalidInput("reduced Hessian of L0 is singular (disconnected weights)")
    beta = float(np.sqrt(2.0 / (pre.mu_min + pre.mu_max)))
    L_star = L0.scaled(beta, beta=beta)
    metric = epsilon_of(L_star.matrix, h_lo, h_hi)
    L_star.metadata["epsilon"] = metric.value
    return DesignResult(L_star, metric, beta, pre.value,
                        {"balance": metric.balance})


def solve_p5(g, hops=1, *, backend="cvxpy", settings=DEFAULT_SETTINGS):
    """Best ``eps`` over PSD, zero-row-sum ``A`` with ``hops``-hop sparsity.

    ``hops=1`` restricts ``A`` to the graph edges; ``hops=2`` to the two-hop
    neighbourhood. The returned ``eps_A`` is recomputed from the spectrum
    of the returned ``A_star``.
    """
    if not isinstance(g, GraphTopology):
        raise InvalidInput("g must be a GraphTopology")
    hops = check_int(hops, "hops", minimum=1)
    if backend not in BACKENDS:
        raise InvalidInput(f"unknown backend {backend!r}; choose from {BACKENDS}")
    pairs = _sdp.mask_pairs(g.hop_mask(hops))
    solve = _sdp.p5_cvxpy if backend == "cvxpy" else _sdp.p5_projection
    A, info = solve(g.n, pairs, settings)
    mu = np.linalg.eigvalsh(reduced_hessian_of_A(A))
    eps_A = float(max(abs(1 - mu[0]), abs(1 - mu[-1])))
    return LowerBoundResult(eps_A, A, hops, info.as_dict())


def reduced_hessian_of_A(A):
    """``J T^T A T J^T`` for a symmetric ``A``."""
    R = reducer(A.shape[0])
    M = R.T @ A @ R
    return 0.5 * (M + M.T)


def design(g, h_lo, h_hi=None, mode="local", *, backend="cvxpy", lower_bound=False,
           hops=1, settings=DEFAULT_SETTINGS):
    """Full design pipeline: LMI weights followed by post-scaling.

    Parameters
    ----------
    g : GraphTopology
    h_lo, h_hi : array_like
        Per-agent Hessian bounds.
    mode : {"local", "global"}
        ``"global"`` replaces the bounds by ``min(h_lo)`` and ``max(h_hi)``
        for every agent.
    backend : {"cvxpy", "projection"}
    lower_bound : bool
        Also solve the sparsity lower-bound program and store ``eps_A``.
    hops : int
        Sparsity radius used for the lower bound.

    Returns
    -------
    DesignResult
    """
    h_lo, h_hi = _bounds(g, h_lo, h_hi)
    if mode not in MODES:
        raise InvalidInput(f"unknown mode {mode!r}; choose from {MODES}")
    if mode == "global":
        h_lo = np.full(g.n, h_lo.min())
        h_hi = np.full(g.n, h_hi.max())
    start = time.perf_counter()
    try:
        x, em, ep, info = solve_p4(g, h_lo, h_hi, backend=backend, settings=settings)
        formulation = "p4"
    except NoFeasiblePoint as exc:
        log.info("LMI design infeasible (%s); using the ratio formulation", exc)
        x, info = solve_ratio(g, h_lo, h_hi, backend=backend, settings=settings)
        em = ep = None
        formulation = "ratio"
    L0 = laplacian_from_nonneg(g, x, provenance="designed")
    result = post_scale(L0, h_lo, h_hi, settings)
    result.L_star.metadata.update(provenance="designed", mode=mode)
    result.diagnostics.update(info)
    result.diagnostics.update(formulation=formulation, mode=mode, backend=backend,
                              eps_minus=em, eps_plus=ep,
                              elapsed_s=time.perf_counter() - start)
    if lower_bound:
        lb = solve_p5(g, hops, backend=backend, settings=settings)
        result.eps_A = lb.eps_A
        result.diagnostics["lower_bound"] = lb.diagnostics
    return result


def unweighted_design(g, h_lo, h_hi=None):
    """Degree-minus-adjacency Laplacian followed by post-scaling."""
    h_lo, h_hi = _bounds(g, h_lo, h_hi)
    L0 = laplacian_from_nonneg(g, np.ones(g.m), provenance="unweighted")
    result = post_scale(L0, h_lo, h_hi)
    result.L_star.metadata["provenance"] = "unweighted"
    return result


class LaplacianDesigner(BaseEstimator):
    """Estimator wrapper around :func:`design`.

    Parameters
    ----------
    mode : {"local", "global"}
        Per-agent or global Hessian bounds.
    backend : {"cvxpy", "projection"}
        SDP solver.
    lower_bound : bool
        Also compute the sparsity lower bound ``eps_A``.
    hops : int
        Sparsity radius of the lower bound.
    settings : NumericSettings, optional

    Attributes
    ----------
    result_ : DesignResult
    laplacian_ : WeightedLaplacian
    weights_ : ndarray
    epsilon_ : float
    beta_ : float
    eps_A_ : float or None

    Examples
    --------
    >>> from dana.graph import GraphTopology
    >>> est = LaplacianDesigner().fit(GraphTopology.complete(4), [1.0] * 4)
    >>> est.epsilon_ < 1
    True
    """

    def __init__(self, mode="local", backend="cvxpy", lower_bound=False, hops=1,
                 settings=None):
        self.mode = mode
        self.backend = backend
        self.lower_bound = lower_bound
        self.hops = hops
        self.settings = settings

    def fit(self, graph, h_lo, h_hi=None):
        """Design weights for ``graph`` given Hessian bounds (or a problem).

        ``h_lo`` may also be a :class:`~dana.problem.DispatchProblem`, whose
        ``delta`` and ``Delta`` then supply both bounds.
        """
        if hasattr(h_lo, "delta") and hasattr(h_lo, "Delta"):
            h_lo, h_hi = h_lo.delta, h_lo.Delta
        self.result_ = design(graph, h_lo, h_hi, self.mode, backend=self.backend,
                              lower_bound=self.lower_bound, hops=self.hops,
                              settings=self.settings or DEFAULT_SETTINGS)
        self.laplacian_ = self.result_.L_star
        self.weights_ = self.laplacian_.weights
        self.epsilon_ = self.result_.epsilon
        self.beta_ = self.result_.beta
        self.eps_A_ = self.result_.eps_A
        return self

    def transform(self, graph=None):
        """Return the designed Laplacian matrix."""
        check_is_fitted(self, "result_")
        return self.laplacian_.matrix
