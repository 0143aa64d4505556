"""Communication topologies and weighted Laplacians."""

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import check_int, check_symmetric, check_vector
from .exceptions import InvalidInput
from .settings import DEFAULT_SETTINGS


@dataclass(frozen=True)
class GraphTopology:
    """Undirected connected graph on nodes ``0..n-1``.

    Edge order is significant: row ``r`` of the incidence matrix is
    ``edges[r]``.
    """

    n: int
    edges: tuple

    def __post_init__(self):
        n = check_int(self.n, "n", minimum=1)
        edges = []
        seen = set()
        for e in self.edges:
            i, j = (int(e[0]), int(e[1]))
            if i == j:
                raise InvalidInput(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidInput(f"edge {(i, j)} out of range for n={n}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidInput(f"duplicate edge {key}")
            seen.add(key)
            edges.append((i, j))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(edges))
        if not self.is_connected():
            raise InvalidInput("graph is not connected")

    @property
    def m(self):
        return len(self.edges)

    @cached_property
    def neighbors(self):
        nbrs = [set() for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(frozenset(s) for s in nbrs)

    @cached_property
    def adjacency(self):
        A = np.zeros((self.n, self.n))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def degree(self):
        return self.adjacency.sum(axis=1)

    def is_connected(self):
        if self.n == 1:
            return True
        seen = {0}
        stack = [0]
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n

    def incidence(self):
        """Signed incidence matrix ``E`` with ``+1`` at ``i`` and ``-1`` at ``j``."""
        E = np.zeros((self.m, self.n))
        for r, (i, j) in enumerate(self.edges):
            E[r, i] = 1.0
            E[r, j] = -1.0
        return E

    def hop_mask(self, hops=1):
        """Boolean mask of pairs joined by a walk of length ``<= hops`` (diagonal set)."""
        reach = np.eye(self.n, dtype=bool)
        step = self.adjacency > 0
        frontier = reach.copy()
        for _ in range(hops):
            frontier = (frontier.astype(int) @ step.astype(int)) > 0
            reach |= frontier
        return reach

    def to_dict(self):
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["n"]), tuple(tuple(e) for e in data["edges"]))

    @classmethod
    def path(cls, n):
        return cls(n, tuple((i, i + 1) for i in range(n - 1)))

    @classmethod
    def complete(cls, n):
        return cls(n, tuple(itertools.combinations(range(n), 2)))

    @classmethod
    def star(cls, n):
        return cls(n, tuple((0, i) for i in range(1, n)))


def khop_neighbors(g, i, k):
    """``k``-hop neighbour set following the recursive union definition.

    ``N^1_i`` is the neighbour set and ``N^k_i`` the union of neighbours of
    the members of ``N^{k-1}_i``. Node ``i`` itself belongs to ``N^2_i``
    whenever it has a neighbour (a walk can return to it).
    """
    k = check_int(k, "k", minimum=1)
    if not 0 <= i < g.n:
        raise InvalidInput(f"node {i} out of range")
    current = set(g.neighbors[i])
    result = set(current)
    for _ in range(k - 1):
        current = set().union(*(g.neighbors[j] for j in current)) if current else set()
        result |= current
    return frozenset(result)


def random_connected(n, m, seed=None):
    """Random connected graph with exactly ``m`` edges.

    A uniform spanning tree is drawn with the Aldous-Broder random walk, then
    ``m - n + 1`` extra edges are sampled uniformly from the non-edges.
    """
    n = check_int(n, "n", minimum=1)
    m = check_int(m, "m", minimum=0)
    if m < n - 1 or m > n * (n - 1) // 2:
        raise InvalidInput(f"m={m} infeasible for n={n}: need {n - 1} <= m <= {n * (n - 1) // 2}")
    rng = np.random.default_rng(seed)
    tree = []
    if n > 1:
        current = int(rng.integers(n))
        visited = {current}
        while len(visited) < n:
            nxt = int(rng.integers(n - 1))
            if nxt >= current:
                nxt += 1
            if nxt not in visited:
                visited.add(nxt)
                tree.append((min(current, nxt), max(current, nxt)))
            current = nxt
    in_tree = set(tree)
    others = [e for e in itertools.combinations(range(n), 2) if e not in in_tree]
    extra = rng.choice(len(others), size=m - len(tree), replace=False) if m > len(tree) else []
    edges = sorted(in_tree | {others[k] for k in extra})
    return GraphTopology(n, tuple(edges))


@dataclass(frozen=True)
class WeightedLaplacian:
    """Weighted graph Laplacian ``L = E^T diag(weights) E`` with metadata."""

    graph: GraphTopology
    weights: np.ndarray
    matrix: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def n(self):
        return self.graph.n

    def scaled(self, factor, **metadata):
        meta = {**self.metadata, **metadata}
        return WeightedLaplacian(self.graph, self.weights * factor,
                                 self.matrix * factor, meta)

    def check(self, settings=DEFAULT_SETTINGS):
        """Raise :class:`InvalidInput` unless all Laplacian invariants hold."""
        check_laplacian(self.matrix, self.graph, settings)
        return self

    def to_dict(self):
        return {**self.graph.to_dict(), "weights": self.weights.tolist(),
                "L": self.matrix.tolist(), "metadata": _jsonable(self.metadata)}

    @classmethod
    def from_dict(cls, data):
        g = GraphTopology.from_dict(data)
        if data.get("weights") is not None:
            lap = laplacian_from_nonneg(g, data["weights"])
        else:
            lap = unweighted_laplacian(g)
        if data.get("L") is not None:
            given = np.asarray(data["L"], dtype=float)
            if given.shape != lap.matrix.shape or not np.allclose(given, lap.matrix, atol=1e-10):
                raise InvalidInput("stored L does not match E^T diag(weights) E")
        return cls(g, lap.weights, lap.matrix, dict(data.get("metadata") or {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def check_laplacian(L, graph=None, settings=DEFAULT_SETTINGS):
    """Validate symmetry, zero row sums, sign/sparsity pattern, PSD and connectivity."""
    L = check_symmetric(L, "L", tol=settings.symmetry_tol)
    n = L.shape[0]
    scale = max(1.0, float(np.max(np.abs(L))))
    if np.max(np.abs(L.sum(axis=1))) > settings.laplacian_tol * scale:
        raise InvalidInput("Laplacian rows must sum to zero")
    off = L - np.diag(np.diag(L))
    if np.any(off > settings.laplacian_tol * scale):
        raise InvalidInput("Laplacian off-diagonal entries must be nonpositive")
    if graph is not None:
        if graph.n != n:
            raise InvalidInput(f"Laplacian is {n}x{n} but graph has {graph.n} nodes")
        outside = ~graph.hop_mask(1)
        if np.any(np.abs(L[outside]) > settings.laplacian_tol * scale):
            raise InvalidInput("Laplacian has entries outside the graph sparsity")
    vals = np.linalg.eigvalsh(L)
    if vals[0] < -settings.psd_tol * scale:
        raise InvalidInput("Laplacian is not positive semidefinite")
    if n > 1 and vals[1] <= settings.psd_tol * scale:
        raise InvalidInput("Laplacian is disconnected (zero eigenvalue not simple)")
    return L


def assemble_laplacian(g, weights, **metadata):
    """``E^T diag(weights) E`` for strictly positive edge weights."""
    w = check_vector(weights, "weights", size=g.m)
    if np.any(w <= 0):
        raise InvalidInput("edge weights must be strictly positive")
    E = g.incidence()
    L = E.T @ (w[:, None] * E)
    return WeightedLaplacian(g, w, L, dict(metadata))


def laplacian_from_nonneg(g, weights, **metadata):
    """Like :func:`assemble_laplacian` but admits zero weights (design output)."""
    w = check_vector(weights, "weights", size=g.m, nonnegative=True)
    E = g.incidence()
    L = E.T @ (w[:, None] * E)
    return WeightedLaplacian(g, w, L, dict(metadata))


def unweighted_laplacian(g):
    """Degree matrix minus adjacency matrix."""
    return assemble_laplacian(g, np.ones(g.m), provenance="unweighted")


def load_laplacian(path):
    with open(path) as fh:
        return WeightedLaplacian.from_dict(json.load(fh))


def save_laplacian(lap, path):
    with open(path, "w") as fh:
        json.dump(lap.to_dict(), fh, indent=2)
