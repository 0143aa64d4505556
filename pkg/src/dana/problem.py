"""Separable cost models and economic-dispatch instances."""

import json
from dataclasses import dataclass

import numpy as np

from ._validation import check_int, check_vector
from .exceptions import InvalidInput


@dataclass(frozen=True)
class CostFunction:
    """``f(x) = a x^2 / 2 + b x + c sin(x + theta)`` with ``a > c >= 0``.

    ``c = 0`` is the plain quadratic cost. The second derivative
    ``a - c sin(x + theta)`` is bracketed by ``delta = a - c`` and
    ``Delta = a + c``.
    """

    a: float
    b: float = 0.0
    c: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not np.isfinite([self.a, self.b, self.c, self.theta]).all():
            raise InvalidInput("cost coefficients must be finite")
        if self.c < 0:
            raise InvalidInput("sinusoid amplitude c must be >= 0")
        if self.a - self.c <= 0:
            raise InvalidInput("cost must be strongly convex: need a - c > 0")

    @property
    def kind(self):
        return "quadratic" if self.c == 0 else "quadratic-plus-sinusoid"

    @property
    def delta(self):
        return self.a - self.c

    @property
    def Delta(self):
        return self.a + self.c

    def value(self, x):
        return 0.5 * self.a * x * x + self.b * x + self.c * np.sin(x + self.theta)

    def grad(self, x):
        return self.a * x + self.b + self.c * np.cos(x + self.theta)

    def hess(self, x):
        return self.a - self.c * np.sin(x + self.theta)


class DispatchProblem:
    """Economic dispatch instance ``min sum f_i(x_i)`` s.t. ``sum x = d`` (+ boxes).

    Costs are stored as coefficient vectors so evaluations vectorize. Box
    limits are optional; without them the instance is the relaxed problem
    that the discrete-time algorithm solves.

    Parameters
    ----------
    a, b, c, theta : array_like
        Cost coefficients per agent (``c`` and ``theta`` default to zero).
    d : float
        Total demand.
    x0 : array_like, optional
        Initial allocation; must sum to ``d``. Defaults to ``(d / n) 1``.
    x_lo, x_hi : array_like, optional
        Box limits; both or neither. When present ``sum x_lo < d < sum x_hi``.
    """

    def __init__(self, a, b=None, c=None, theta=None, d=0.0, x0=None,
                 x_lo=None, x_hi=None, *, conservation_tol=1e-9):
        self.a = check_vector(a, "a", positive=True)
        n = self.a.shape[0]
        self.b = np.zeros(n) if b is None else check_vector(b, "b", n)
        self.c = np.zeros(n) if c is None else check_vector(c, "c", n, nonnegative=True)
        self.theta = np.zeros(n) if theta is None else check_vector(theta, "theta", n)
        if np.any(self.a - self.c <= 0):
            raise InvalidInput("costs must be strongly convex: need a - c > 0")
        self.d = float(d)
        if not np.isfinite(self.d):
            raise InvalidInput("d must be finite")
        self.x0 = np.full(n, self.d / n) if x0 is None else check_vector(x0, "x0", n)
        if abs(self.x0.sum() - self.d) > conservation_tol * max(1.0, abs(self.d)):
            raise InvalidInput(f"initial allocation sums to {self.x0.sum()}, expected d={self.d}")
        if (x_lo is None) != (x_hi is None):
            raise InvalidInput("give both box limits or neither")
        if x_lo is not None:
            self.x_lo = check_vector(x_lo, "x_lo", n)
            self.x_hi = check_vector(x_hi, "x_hi", n)
            if np.any(self.x_lo > self.x_hi):
                raise InvalidInput("x_lo must not exceed x_hi")
            if not self.x_lo.sum() < self.d < self.x_hi.sum():
                raise InvalidInput("need sum(x_lo) < d < sum(x_hi) strictly")
        else:
            self.x_lo = self.x_hi = None

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def has_box(self):
        return self.x_lo is not None

    @property
    def is_quadratic(self):
        return bool(np.all(self.c == 0))

    @property
    def delta(self):
        return self.a - self.c

    @property
    def Delta(self):
        return self.a + self.c

    @property
    def costs(self):
        return [CostFunction(*args) for args in zip(self.a, self.b, self.c, self.theta)]

    def _check_x(self, x):
        return check_vector(x, "x", self.n)

    def value(self, x):
        x = self._check_x(x)
        return float(np.sum(0.5 * self.a * x * x + self.b * x + self.c * np.sin(x + self.theta)))

    def grad(self, x):
        x = self._check_x(x)
        return self.a * x + self.b + self.c * np.cos(x + self.theta)

    def hess(self, x):
        """Diagonal of the Hessian at ``x``."""
        x = self._check_x(x)
        return self.a - self.c * np.sin(x + self.theta)

    def increments(self, x, dx):
        """Per-agent ``f_i(x_i + dx_i) - f_i(x_i)`` without cancellation."""
        half = 0.5 * dx
        out = dx * (self.a * (x + half) + self.b)
        if np.any(self.c):
            out += 2.0 * self.c * np.cos(x + half + self.theta) * np.sin(half)
        return out

    def conserving_increment(self, x, dx):
        """``f(x + dx) - f(x)`` for a step with ``sum(dx) = 0``.

        The mean marginal cost is subtracted from every agent before summing;
        that term vanishes exactly for a conserving step, and dropping it
        keeps the result accurate when the decrease is far below ``|f|``.
        """
        nu = float(np.mean(self.grad(x + 0.5 * dx)))
        return float(np.sum(self.increments(x, dx) - nu * dx))

    def replace(self, **changes):
        kw = dict(a=self.a, b=self.b, c=self.c, theta=self.theta, d=self.d, x0=self.x0,
                  x_lo=self.x_lo, x_hi=self.x_hi)
        kw.update(changes)
        return DispatchProblem(**kw)

    def without_box(self):
        return self.replace(x_lo=None, x_hi=None)

    def to_dict(self):
        costs = [{"a": float(a), "b": float(b), "c": float(c), "theta": float(t)}
                 for a, b, c, t in zip(self.a, self.b, self.c, self.theta)]
        out = {"costs": costs, "d": self.d, "x0": self.x0.tolist()}
        if self.has_box:
            out["x_lo"] = self.x_lo.tolist()
            out["x_hi"] = self.x_hi.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        costs = data["costs"]
        get = lambda key: [float(cf.get(key, 0.0)) for cf in costs]  # noqa: E731
        return cls(get("a"), get("b"), get("c"), get("theta"), d=data["d"],
                   x0=data.get("x0"), x_lo=data.get("x_lo"), x_hi=data.get("x_hi"))

    def __repr__(self):
        box = ", box" if self.has_box else ""
        return f"DispatchProblem(n={self.n}, d={self.d}{box})"


def eval_f(p, x):
    return p.value(x)


def eval_grad(p, x):
    return p.grad(x)


def eval_hess(p, x):
    return p.hess(x)


def reduced_objective(p, L, z):
    """``g(z) = f(x0 + L z)``."""
    return p.value(p.x0 + _mat(L) @ np.asarray(z, float))


def reduced_gradient(p, L, z):
    """``grad g(z) = L grad f(x0 + L z)``."""
    Lm = _mat(L)
    return Lm @ p.grad(p.x0 + Lm @ np.asarray(z, float))


def _mat(L):
    return getattr(L, "matrix", L)


# Instance families used in the experiments.
FAMILIES = {
    "sinusoid": dict(a=(2.0, 4.0), b=(-1.0, 1.0), c=(0.0, 1.0), theta=(0.0, 2 * np.pi),
                     demand_per_node=None, d=200.0),
    "box": dict(a=(0.5, 3.0), b=(-2.0, 2.0), x_lo=(1.5, 3.0), x_hi=(3.0, 4.5),
                demand_per_node=3.0),
    "tight": dict(a=(0.8, 1.2), b=(0.0, 1.0), demand_per_node=2.0),
    "wide": dict(a=(0.2, 5.0), b=(0.0, 1.0), demand_per_node=2.0),
    "quadratic": dict(a=(2.0, 4.0), b=(-1.0, 1.0), d=200.0),
}


def random_instance(n, family="sinusoid", seed=None, *, d=None, **overrides):
    """Draw a random dispatch instance from a named family.

    ``overrides`` replace any range of the family, e.g. ``a=(0.5, 3.0)``.
    ``x0`` is always ``(d / n) 1``. Sinusoid amplitudes are redrawn until
    ``a - c > 0``.
    """
    n = check_int(n, "n", minimum=1)
    if family not in FAMILIES:
        raise InvalidInput(f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
    spec = {**FAMILIES[family], **overrides}
    rng = np.random.default_rng(seed)
    a = rng.uniform(*spec["a"], size=n)
    b = rng.uniform(*spec["b"], size=n) if "b" in spec else np.zeros(n)
    c = np.zeros(n)
    theta = np.zeros(n)
    if spec.get("c") is not None:
        c = rng.uniform(*spec["c"], size=n)
        while np.any(a - c <= 0):
            bad = a - c <= 0
            c[bad] = rng.uniform(*spec["c"], size=int(bad.sum()))
        theta = rng.uniform(*spec.get("theta", (0.0, 2 * np.pi)), size=n)
    if d is None:
        d = spec.get("d")
        if spec.get("demand_per_node") is not None:
            d = spec["demand_per_node"] * n
        if d is None:
            d = 2.0 * n
    x_lo = x_hi = None
    if spec.get("x_lo") is not None:
        x_lo = rng.uniform(*spec["x_lo"], size=n)
        x_hi = rng.uniform(*spec["x_hi"], size=n)
    return DispatchProblem(a, b, c, theta, d=d, x0=np.full(n, d / n), x_lo=x_lo, x_hi=x_hi)


def three_node_instance():
    """The 3-agent box-constrained example with an infeasible-box start."""
    return DispatchProblem(a=[0.5, 1.5, 4.0], b=[0.5, 0.5, 0.5], d=6.0,
                           x0=[5.0, -1.0, 2.0], x_lo=[0.2, 2.5, 1.5], x_hi=[1.0, 6.0, 4.0])


THREE_NODE_DUAL0 = np.array([1.5, 0.5, 0.0, 0.0, 2.0, 1.0])


def load_problem(path):
    with open(path) as fh:
        return DispatchProblem.from_dict(json.load(fh))


def save_problem(p, path):
    with open(path, "w") as fh:
        json.dump(p.to_dict(), fh, indent=2)
