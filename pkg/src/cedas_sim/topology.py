"""Network graphs, Lazy-Metropolis mixing matrices, and their spectra.

All mixing matrices here are symmetric, doubly stochastic, and compliant
with an undirected connected graph; consensus quality is summarized by the
spectral gap 1 - lambda_2.
"""

import json
from dataclasses import dataclass
from functools import cached_property
from math import isqrt

import numpy as np
import scipy.linalg

from .errors import DisconnectedCustom, GammaOutOfRange, NonSquareGrid, TooSmall

GRAPH_KINDS = ("ring", "grid", "exponential", "complete", "path", "custom")

_EIG_TOL = 1e-9
_STOCH_TOL = 1e-12


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph on nodes 0..n-1.

    edges holds each pair once as (i, j) with i < j, sorted.
    """

    kind: str
    n: int
    edges: tuple

    @cached_property
    def neighbors(self):
        """Tuple of sorted neighbor tuples, indexed by node."""
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def degrees(self):
        return np.array([len(a) for a in self.neighbors])


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric doubly-stochastic weight matrix with cached spectrum."""

    w: np.ndarray
    kind: str = "custom"

    @cached_property
    def n(self):
        return self.w.shape[0]

    @cached_property
    def eigenvalues(self):
        """Eigenvalues sorted descending; computed by a symmetric solver."""
        vals = scipy.linalg.eigvalsh(self.w)
        return vals[::-1].copy()

    @cached_property
    def spectral_gap(self):
        return spectral_gap(self)


@dataclass(frozen=True)
class TildeMatrix:
    """Damped mixing matrix I - (gamma/2)(I - W); positive definite for gamma in (0,1)."""

    wt: np.ndarray
    gamma: float

    @cached_property
    def eigenvalues(self):
        vals = scipy.linalg.eigvalsh(self.wt)
        return vals[::-1].copy()


def _connected(n, neighbor_lists):
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in neighbor_lists[i]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def build_graph(kind, n, custom_edges=None):
    """Construct one of the named graph families on n nodes.

    grid is a bounded 4-neighbor lattice (no wraparound) and needs n to be a
    perfect square; exponential connects i to (i +- 2^t) mod n for every t
    with 2^t < n, deduplicated; custom validates a caller-supplied edge list.
    """
    n = int(n)
    if n < 2:
        raise TooSmall(f"need n >= 2 nodes, got {n}")
    if kind not in GRAPH_KINDS:
        raise ValueError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")

    edges = set()
    if kind == "ring":
        for i in range(n):
            j = (i + 1) % n
            if i != j:
                edges.add((min(i, j), max(i, j)))
    elif kind == "path":
        edges = {(i, i + 1) for i in range(n - 1)}
    elif kind == "complete":
        edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
    elif kind == "grid":
        side = isqrt(n)
        if side * side != n:
            raise NonSquareGrid(f"grid needs a perfect square node count, got {n}")
        for r in range(side):
            for c in range(side):
                i = r * side + c
                if c + 1 < side:
                    edges.add((i, i + 1))
                if r + 1 < side:
                    edges.add((i, i + side))
    elif kind == "exponential":
        hops = []
        t = 1
        while t < n:
            hops.append(t)
            t *= 2
        for i in range(n):
            for h in hops:
                for j in ((i + h) % n, (i - h) % n):
                    if j != i:
                        edges.add((min(i, j), max(i, j)))
    else:  # custom
        if custom_edges is None:
            raise ValueError("custom graph requires an explicit edge list")
        for e in custom_edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValueError(f"self-loop ({i},{j}) not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i},{j}) out of range for n={n}")
            edges.add((min(i, j), max(i, j)))

    g = Graph(kind=kind, n=n, edges=tuple(sorted(edges)))
    if not _connected(n, g.neighbors):
        if kind == "custom":
            raise DisconnectedCustom("custom edge list is not connected")
        raise AssertionError(f"generated {kind} graph unexpectedly disconnected")
    return g


def lazy_metropolis(g):
    """Lazy Metropolis mixing matrix for a connected graph.

    Two conventions of these weights coexist in the consensus literature:
    w_ij = 1/(2 max{deg_i, deg_j}) over plain neighbor counts, and the
    Metropolis-Hastings form 1/(2 (1 + max{deg_i, deg_j})), i.e. the lazy
    chain (I + W_MH)/2. The pinned spectral-gap targets (see verify module)
    require the plain form for lattice-like families and the MH form for
    exponential graphs, so the convention is chosen per kind.
    """
    deg = g.degrees.astype(float)
    if g.kind == "exponential":
        deg = deg + 1.0
    w = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (2.0 * max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return MixingMatrix(w=w, kind=g.kind)


def validate_mixing(w, kind="custom"):
    """Wrap a raw weight matrix after checking the MixingMatrix invariants."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    if not np.array_equal(w, w.T):
        raise ValueError("weight matrix must be symmetric")
    if (w < 0).any():
        raise ValueError("weight matrix must be nonnegative")
    rows = w.sum(axis=1)
    if np.abs(rows - 1.0).max() > _STOCH_TOL:
        raise ValueError(f"rows must sum to 1 within {_STOCH_TOL}, worst {np.abs(rows - 1.0).max():.3e}")
    m = MixingMatrix(w=w, kind=kind)
    vals = m.eigenvalues
    if abs(vals[0] - 1.0) > _EIG_TOL or vals[-1] <= -1.0 or vals[0] > 1.0 + _EIG_TOL:
        raise ValueError("eigenvalues must lie in (-1, 1] with lambda_1 = 1")
    return m


def spectral_gap(m):
    """1 - lambda_2 of a mixing matrix (0.0 for the trivial n=1 chain)."""
    if m.w.shape[0] < 2:
        return 0.0
    return float(1.0 - m.eigenvalues[1])


def tilde_matrix(m, gamma):
    """Damped matrix I - (gamma/2)(I - W); eigenvalues map to 1 - (gamma/2)(1 - lambda_i)."""
    if not 0.0 < gamma < 1.0:
        raise GammaOutOfRange(f"gamma must lie in (0, 1), got {gamma}")
    n = m.w.shape[0]
    wt = np.eye(n) - (gamma / 2.0) * (np.eye(n) - m.w)
    return TildeMatrix(wt=wt, gamma=float(gamma))


# --- serialization ---

def graph_to_json(g):
    return json.dumps({"kind": g.kind, "n": g.n, "edges": [list(e) for e in g.edges]})


def graph_from_json(s):
    d = json.loads(s)
    return build_graph("custom" if d["kind"] == "custom" else d["kind"], d["n"],
                       custom_edges=d["edges"] if d["kind"] == "custom" else None)


def mixing_to_json(m):
    return json.dumps({"kind": m.kind, "n": int(m.w.shape[0]), "w": m.w.tolist()})


def mixing_from_json(s):
    d = json.loads(s)
    return validate_mixing(np.array(d["w"], dtype=float), kind=d.get("kind", "custom"))
