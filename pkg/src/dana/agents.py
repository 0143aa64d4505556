"""Per-agent message-passing realization of the discrete-time iteration.

Every agent stores only its own cost coefficients, its row of ``L``
restricted to ``{i} U N_i`` and a few scalars. Agents interact exclusively
through synchronous one-hop broadcast rounds; a harness records every read
and rejects any read from outside ``N_i U N_i^2 U {i}``.

One outer iteration uses the schedule

* ``grad``: broadcast ``df_i``; ``y_i = sum_j L_ij df_j``, ``z_i = -y_i``.
* for each of the ``q`` inner steps, ``y`` then ``v``: broadcast ``y_i``,
  form ``v_i = h_i (L y)_i``; broadcast ``v_i``, set
  ``y_i <- y_i - (L v)_i`` and ``z_i <- z_i - y_i``.
* ``step``: broadcast ``z_i``; ``x_i <- x_i + alpha (L z)_i``.

The direction ``z`` therefore takes ``2q + 1`` rounds and the state update
one more.
"""

from dataclasses import dataclass, field

import numpy as np

from .dana_d import DEFAULT_MAX_ITERS, DEFAULT_TOL, _drive, _prepare
from .exceptions import LocalityBreach
from .graph import GraphTopology, khop_neighbors


@dataclass
class AgentState:
    """Local memory of agent ``i``."""

    i: int
    row: dict                       # j -> L_ij for j in {i} U N_i
    coeffs: tuple                   # (a, b, c, theta)
    x: float
    y: float = 0.0
    z: float = 0.0
    w: float = 0.0
    h: float = 0.0
    df: float = 0.0
    p: int = 0
    mailbox: dict = field(default_factory=dict)

    def local_derivatives(self):
        a, b, c, th = self.coeffs
        self.df = a * self.x + b + c * np.cos(self.x + th)
        self.h = a - c * np.sin(self.x + th)

    def weighted_sum(self, net, tag):
        """``sum_j L_ij v_j`` over the values received in round ``tag``."""
        box = self.mailbox[tag]
        return sum(lij * net.read(self.i, j, box) for j, lij in self.row.items())


class Network:
    """Synchronous one-hop broadcast medium with a locality harness.

    Parameters
    ----------
    graph : GraphTopology
    strict : bool
        Raise :class:`LocalityBreach` on the first illegal read; otherwise
        record it in ``breaches``.
    """

    def __init__(self, graph, strict=True):
        self.graph = graph
        self.strict = strict
        self.allowed = [khop_neighbors(graph, i, 2) | graph.neighbors[i] | {i}
                        if graph.neighbors[i] else frozenset({i}) for i in range(graph.n)]
        self.rounds = 0
        self.messages = 0
        self.reads = 0
        self.breaches = []
        self.round_log = []

    def broadcast(self, agents, tag, attr):
        """One round: each agent sends ``attr`` to itself and its neighbours."""
        values = {ag.i: getattr(ag, attr) for ag in agents}
        for ag in agents:
            senders = self.graph.neighbors[ag.i] | {ag.i}
            ag.mailbox[tag] = {j: values[j] for j in senders}
        self.rounds += 1
        self.messages += 2 * self.graph.m
        self.round_log.append(tag)

    def read(self, reader, sender, box):
        self.reads += 1
        if sender not in self.allowed[reader]:
            self.breaches.append((reader, sender))
            if self.strict:
                raise LocalityBreach(f"agent {reader} read from non-neighbour {sender}")
        return box[sender]


def make_agents(p, Lm, graph, x=None):
    x = p.x0 if x is None else x
    agents = []
    for i in range(p.n):
        cols = sorted(graph.neighbors[i] | {i})
        row = {j: float(Lm[i, j]) for j in cols}
        agents.append(AgentState(i, row, (p.a[i], p.b[i], p.c[i], p.theta[i]), float(x[i])))
    return agents


def outer_iteration(agents, net, alpha, q):
    """Run one outer iteration in place; returns the rounds it used."""
    before = net.rounds
    for ag in agents:
        ag.local_derivatives()
    net.broadcast(agents, "grad", "df")
    for ag in agents:
        ag.y = ag.weighted_sum(net, "grad")
        ag.z = -ag.y
        ag.p = 0
    for _ in range(q):
        net.broadcast(agents, "y", "y")
        for ag in agents:
            ag.w = ag.h * ag.weighted_sum(net, "y")
        net.broadcast(agents, "v", "w")
        for ag in agents:
            ag.y = ag.y - ag.weighted_sum(net, "v")
            ag.z -= ag.y
            ag.p += 1
    net.broadcast(agents, "step", "z")
    for ag in agents:
        ag.x = ag.x + ag.weighted_sum(net, "step") * alpha
    return net.rounds - before


def _graph_of(L, Lm, tol=0.0):
    g = getattr(L, "graph", None)
    if g is not None:
        return g
    n = Lm.shape[0]
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n) if abs(Lm[i, j]) > tol)
    return GraphTopology(n, edges)


def run_message_passing(p, L, q=0, alpha="theorem1", *, max_iters=DEFAULT_MAX_ITERS,
                        tol=DEFAULT_TOL, eps=None, x_star=None, z_star=None,
                        record_states=False, record_every=1, strict=True):
    """Per-agent simulation of the discrete-time iteration.

    Same arguments and result type as :func:`dana.dana_d.run_matrix_form`;
    ``info`` additionally holds the network counters (rounds per outer
    iteration, total messages, locality breaches).

    Raises
    ------
    LocalityBreach
        If ``strict`` and an agent reads outside ``N_i U N_i^2 U {i}``.
    """
    Lm, q, a, eps = _prepare(p, L, q, alpha, eps)
    graph = _graph_of(L, Lm)
    net = Network(graph, strict=strict)
    agents = make_agents(p, Lm, graph)
    per_iter = []

    def advance(x, z):
        for ag, xi in zip(agents, x):
            ag.x = float(xi)
        per_iter.append(outer_iteration(agents, net, a, q))
        step = np.array([ag.z for ag in agents])
        return step, np.array([ag.x for ag in agents])

    info = {"network": net, "rounds_each": per_iter}
    res = _drive(p, Lm, q, a, eps, advance, max_iters=max_iters, tol=tol, z0=None,
                 x_star=x_star, z_star=z_star, record_states=record_states,
                 record_every=record_every, info=info)
    res.info.update(total_rounds=net.rounds, messages=net.messages, reads=net.reads,
                    breaches=list(net.breaches))
    return res
