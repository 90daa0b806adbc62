"""Weighted graphs, combinatorial distance and the quasi-metric geometry.

A :class:`WeightedGraph` stores a symmetric weight matrix ``mu`` (loops on the
diagonal, counted once) and the induced vertex measure ``m(x) = sum_y mu_xy``.
A :class:`QuasiMetric` turns graph distances into ``rho = d**beta`` and answers
ball, volume and annulus queries.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

#: all-pairs distances are cached up to this many vertices
DENSE_DISTANCE_LIMIT = 5000


class UnreachableError(ValueError):
    """Raised when two vertices lie in different components."""


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Immutable weighted graph with loops.

    Parameters
    ----------
    weights : scipy.sparse matrix (n, n)
        Symmetric nonnegative edge weights ``mu_xy``; the diagonal holds loops.
    max_degree : int, optional
        Declared bound ``M_0`` on the number of neighbours (loops included).
        Defaults to the observed maximum.
    """

    weights: sp.csr_matrix
    max_degree: int | None = None
    coords: np.ndarray | None = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        w = sp.csr_matrix(self.weights, dtype=float)
        w.eliminate_zeros()
        w.sort_indices()
        if w.shape[0] != w.shape[1]:
            raise ValueError("weight matrix must be square")
        if w.nnz and w.data.min() <= 0:
            raise ValueError("edge weights must be positive")
        if (w != w.T).nnz:
            raise ValueError("edge weights must be symmetric")
        object.__setattr__(self, "weights", w)
        m = np.asarray(w.sum(axis=1)).ravel()
        if np.any(m <= 0):
            raise ValueError("every vertex needs positive measure")
        deg = np.diff(w.indptr)
        if self.max_degree is None:
            object.__setattr__(self, "max_degree", int(deg.max()))
        elif deg.max() > self.max_degree:
            raise ValueError(f"degree {deg.max()} exceeds declared M_0={self.max_degree}")
        ncomp, _ = csgraph.connected_components(w, directed=False)
        if ncomp != 1:
            raise ValueError(f"graph must be connected, found {ncomp} components")

    # basic structure -----------------------------------------------------

    @classmethod
    def from_edges(cls, n, edges, **kwargs):
        """Build from an iterable of ``(u, v, w)``; loops ``(u, u, w)`` allowed."""
        edges = list(edges)
        if not edges:
            raise ValueError("no edges")
        u, v, w = (np.asarray(a) for a in zip(*edges))
        u = u.astype(np.int64)
        v = v.astype(np.int64)
        w = w.astype(float)
        if u.min() < 0 or max(u.max(), v.max()) >= n:
            raise ValueError("vertex id out of range")
        off = u != v
        rows = np.concatenate([u, v[off]])
        cols = np.concatenate([v, u[off]])
        vals = np.concatenate([w, w[off]])
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return cls(mat, **kwargs)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @cached_property
    def measure(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()

    @cached_property
    def loops(self) -> np.ndarray:
        return self.weights.diagonal()

    @cached_property
    def degree(self) -> np.ndarray:
        """Number of neighbours, loop excluded."""
        deg = np.diff(self.weights.indptr)
        return deg - (self.loops > 0)

    def edges(self):
        """Undirected edges ``(u, v, w)`` with ``u <= v``."""
        upper = sp.triu(self.weights).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return [(int(upper.row[i]), int(upper.col[i]), float(upper.data[i])) for i in order]

    @property
    def edge_count(self) -> int:
        """Undirected edges, loops excluded."""
        return int((self.weights.nnz - np.count_nonzero(self.loops)) // 2)

    def adjacency(self, x):
        """List of ``(neighbour, weight)`` for vertex ``x``."""
        lo, hi = self.weights.indptr[x], self.weights.indptr[x + 1]
        return list(zip(self.weights.indices[lo:hi].tolist(), self.weights.data[lo:hi].tolist()))

    @cached_property
    def transition(self) -> sp.csr_matrix:
        """Row-stochastic matrix of ``P``: ``P[x, y] = p(x, y) m(y)``."""
        return sp.csr_matrix(sp.diags(1.0 / self.measure) @ self.weights)

    @cached_property
    def laziness(self) -> float:
        """``min_x p(x,x) m(x)``, the achieved (LB) constant."""
        return float(np.min(self.loops / self.measure))

    @cached_property
    def boundary(self) -> np.ndarray:
        """Vertices with fewer neighbours than the maximum (truncation boundary)."""
        return np.flatnonzero(self.degree < self.degree.max())

    # distances -----------------------------------------------------------

    @cached_property
    def _distance_matrix(self) -> np.ndarray:
        d = csgraph.shortest_path(self.weights, method="D", unweighted=True, directed=False)
        return d

    def distances_from(self, x) -> np.ndarray:
        """Graph distances from ``x`` to every vertex (BFS, loops ignored)."""
        if self.n <= DENSE_DISTANCE_LIMIT:
            with self._lock:
                mat = self._distance_matrix
            return mat[x]
        return csgraph.shortest_path(
            self.weights, method="D", unweighted=True, directed=False, indices=[x]
        )[0]

    def distance_matrix(self) -> np.ndarray:
        if self.n > DENSE_DISTANCE_LIMIT:
            raise MemoryError(f"all-pairs distances disabled above n={DENSE_DISTANCE_LIMIT}")
        with self._lock:
            return self._distance_matrix


def graph_distance(g: WeightedGraph, x, y) -> int:
    """Length of the shortest path from ``x`` to ``y``."""
    if not (0 <= x < g.n and 0 <= y < g.n):
        raise IndexError("vertex id out of range")
    d = g.distances_from(x)[y]
    if not np.isfinite(d):
        raise UnreachableError(f"unreachable: {x} -> {y}")
    return int(d)


class QuasiMetric:
    """The quasi-distance ``rho = d**beta``.

    Use :meth:`constant` for a fixed exponent and :meth:`product` for a free
    product, where ``rho = max(rho_1, rho_2)`` coordinatewise.
    """

    def __init__(self, kind, bound, beta=None, factors=None):
        self.kind = kind
        self.bound = float(bound)
        self.beta = beta
        self.factors = factors
        self._cache = {}
        self._lock = threading.Lock()

    @classmethod
    def constant(cls, beta):
        beta = float(beta)
        if beta < 1:
            raise ValueError("beta must be >= 1")
        return cls("constant-beta", beta, beta=beta)

    @classmethod
    def product(cls, g1, q1, g2, q2):
        """Quasi-metric on the free product of ``(g1, q1)`` and ``(g2, q2)``."""
        return cls("product", max(q1.bound, q2.bound), factors=((g1, q1), (g2, q2)))

    def describe(self):
        if self.kind == "constant-beta":
            return {"kind": self.kind, "beta": self.beta}
        return {"kind": self.kind, "factors": [q.describe() for _, q in self.factors]}

    def row(self, g: WeightedGraph, x) -> np.ndarray:
        """``rho(x, .)`` as a vector."""
        if self.kind == "constant-beta":
            return g.distances_from(x) ** self.beta
        (g1, q1), (g2, q2) = self.factors
        x1, x2 = divmod(int(x), g2.n)
        return np.maximum.outer(q1.row(g1, x1), q2.row(g2, x2)).ravel()

    def matrix(self, g: WeightedGraph) -> np.ndarray:
        """All-pairs ``rho``; cached per graph."""
        key = id(g)
        with self._lock:
            if key not in self._cache:
                if self.kind == "constant-beta":
                    mat = g.distance_matrix() ** self.beta
                else:
                    (g1, q1), (g2, q2) = self.factors
                    r1, r2 = q1.matrix(g1), q2.matrix(g2)
                    mat = np.maximum(r1[:, None, :, None], r2[None, :, None, :])
                    mat = mat.reshape(g.n, g.n)
                self._cache[key] = (g, mat)
            return self._cache[key][1]

    def __call__(self, g, x, y):
        return float(self.row(g, x)[y])


def rho(q: QuasiMetric, g: WeightedGraph, x, y) -> float:
    return q(g, x, y)


@dataclass(frozen=True)
class BallGeometry:
    center: int
    radius: float
    members: np.ndarray
    volume: float


def ball(q: QuasiMetric, g: WeightedGraph, x, r) -> BallGeometry:
    """Open ball ``{y : rho(x, y) < r}``."""
    if r <= 0:
        raise ValueError("radius must be positive")
    members = np.flatnonzero(q.row(g, x) < r)
    return BallGeometry(int(x), float(r), members, float(g.measure[members].sum()))


def volume(q, g, x, r) -> float:
    return ball(q, g, x, r).volume


def volumes(q, g, x, radii) -> np.ndarray:
    """``V(x, r)`` for an array of radii, sharing one sorted pass."""
    r = q.row(g, x)
    order = np.argsort(r, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(g.measure[order])])
    idx = np.searchsorted(r[order], np.asarray(radii, dtype=float), side="left")
    return cum[idx]


def volume_table(q, g, kmax) -> np.ndarray:
    """``V[x, k-1] = V(x, k)`` for every vertex and ``k = 1..kmax``."""
    rmat = q.matrix(g)
    order = np.argsort(rmat, axis=1, kind="stable")
    srt = np.take_along_axis(rmat, order, axis=1)
    cum = np.concatenate([np.zeros((g.n, 1)), np.cumsum(g.measure[order], axis=1)], axis=1)
    ks = np.arange(1, kmax + 1, dtype=float)
    out = np.empty((g.n, kmax))
    for x in range(g.n):
        out[x] = cum[x, np.searchsorted(srt[x], ks, side="left")]
    return out


def annulus(q: QuasiMetric, g: WeightedGraph, x, k, j) -> np.ndarray:
    """``C_0 = B(x, 2^{B+1} k)``; ``C_j = B(x, 2^{B+j+1} k) \\ B(x, 2^{B+j} k)``."""
    if j < 0 or k <= 0:
        raise ValueError("need j >= 0 and k > 0")
    r = q.row(g, x)
    outer = r < 2.0 ** (q.bound + j + 1) * k
    if j == 0:
        return np.flatnonzero(outer)
    inner = r < 2.0 ** (q.bound + j) * k
    return np.flatnonzero(outer & ~inner)


def set_distance(q: QuasiMetric, g: WeightedGraph, E, F) -> float:
    """``rho(E, F) = min rho(x, y)`` over ``x in E, y in F``."""
    E = np.asarray(E)
    F = np.asarray(F)
    if len(E) == 0 or len(F) == 0:
        return np.inf
    if len(E) > len(F):
        E, F = F, E
    return float(min(q.row(g, x)[F].min() for x in E))


def distance_to_set(q: QuasiMetric, g: WeightedGraph, S) -> np.ndarray:
    """``rho(x, S)`` for every vertex ``x``."""
    S = np.asarray(S)
    if len(S) == 0:
        return np.full(g.n, np.inf)
    if g.n <= DENSE_DISTANCE_LIMIT:
        return q.matrix(g)[:, S].min(axis=1)
    return np.min([q.row(g, s) for s in S], axis=0)


def safe_zone(q: QuasiMetric, g: WeightedGraph, margin) -> np.ndarray:
    """Vertices ``x`` with ``rho(x, boundary) >= margin``."""
    return np.flatnonzero(distance_to_set(q, g, g.boundary) >= margin)


def doubling_scan(q, g, radii, sample):
    """Volume-doubling ratios and the fitted growth exponent.

    Returns a dict with ``max_ratio`` (largest ``V(x,2r)/V(x,r)`` over the
    sample grid), its ``argmax`` ``(x, r)`` and ``exponent``: the least-squares
    slope of ``log V(x, lam r0)`` against ``log lam`` with ``r0 = min(radii)``.
    """
    sample = np.atleast_1d(np.asarray(sample))
    if sample.size == 0:
        raise ValueError("empty sample")
    radii = np.asarray(sorted(radii), dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    best, arg = -np.inf, None
    logs_lam, logs_v = [], []
    for x in sample:
        v1 = volumes(q, g, x, radii)
        v2 = volumes(q, g, x, 2 * radii)
        ratio = v2 / v1
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best, arg = float(ratio[i]), (int(x), float(radii[i]))
        logs_lam.append(np.log(radii / radii[0]))
        logs_v.append(np.log(v1 / v1[0]))
    lam = np.concatenate(logs_lam)
    lv = np.concatenate(logs_v)
    exponent = float(lam @ lv / (lam @ lam)) if lam @ lam > 0 else float("nan")
    return {"max_ratio": best, "argmax": arg, "exponent": exponent}


def growth_exponent(q, g, sample=None, radii=None) -> float:
    """Fitted doubling exponent ``d`` in ``V(x, lam r) <~ lam^d V(x, r)``."""
    if sample is None:
        dist = distance_to_set(q, g, g.boundary)
        sample = [int(np.argmax(dist))]
    if radii is None:
        rmax = q.row(g, sample[0]).max()
        radii = np.geomspace(1.5, max(rmax / 2, 3.0), 6)
    return doubling_scan(q, g, radii, sample)["exponent"]
