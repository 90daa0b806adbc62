"""Constructors for lattice boxes, cycles, paths, gasket prefractals and free products."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .graph import QuasiMetric, WeightedGraph

#: walk dimension of the Sierpinski gasket
GASKET_BETA = math.log2(5)
#: volume growth exponent of the gasket in graph distance
GASKET_DIM = math.log2(3)

FAMILIES = ("lattice", "cycle", "path", "sierpinski", "free_product")


@dataclass(frozen=True)
class BuilderSpec:
    """Description of a graph family member.

    ``params`` depends on ``family``: ``dim`` and ``side`` for lattices, ``n``
    for cycles and paths, ``level`` for gaskets, and ``factors`` (two
    ``BuilderSpec``) for free products. ``beta`` overrides the default
    exponent of the attached quasi-metric.
    """

    family: str
    params: dict = field(default_factory=dict)
    alpha: float = 0.5
    beta: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("loop fraction must lie in (0, 1)")
        p = self.params
        if self.family == "lattice":
            if p.get("dim", 0) < 1 or p.get("side", 0) < 2:
                raise ValueError("lattice needs dim >= 1 and side >= 2")
        elif self.family == "cycle":
            if p.get("n", 0) < 3:
                raise ValueError("cycle needs n >= 3")
        elif self.family == "path":
            if p.get("n", 0) < 2:
                raise ValueError("path needs n >= 2")
        elif self.family == "sierpinski":
            if p.get("level", -1) < 0:
                raise ValueError("level must be >= 0")
        elif len(p.get("factors", ())) != 2:
            raise ValueError("free product needs two factor specs")

    @classmethod
    def lattice(cls, dim, side, **kw):
        return cls("lattice", {"dim": int(dim), "side": int(side)}, **kw)

    @classmethod
    def cycle(cls, n, **kw):
        return cls("cycle", {"n": int(n)}, **kw)

    @classmethod
    def path(cls, n, **kw):
        return cls("path", {"n": int(n)}, **kw)

    @classmethod
    def sierpinski(cls, level, **kw):
        return cls("sierpinski", {"level": int(level)}, **kw)

    @classmethod
    def free_product(cls, first, second, **kw):
        return cls("free_product", {"factors": (first, second)}, **kw)

    @property
    def default_beta(self) -> float:
        if self.beta is not None:
            return float(self.beta)
        return GASKET_BETA if self.family == "sierpinski" else 2.0

    def to_dict(self):
        out = {"family": self.family, "alpha": self.alpha, "beta": self.beta}
        if self.family == "free_product":
            out["factors"] = [f.to_dict() for f in self.params["factors"]]
        else:
            out.update(self.params)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family")
        alpha = d.pop("alpha", 0.5)
        beta = d.pop("beta", None)
        if family == "free_product":
            d = {"factors": tuple(cls.from_dict(f) for f in d["factors"])}
        return cls(family, d, alpha=alpha, beta=beta)


class Built(NamedTuple):
    graph: WeightedGraph
    metric: QuasiMetric
    spec: BuilderSpec


def lazify(g: WeightedGraph, alpha=0.5) -> WeightedGraph:
    """Raise loop weights until ``mu_xx / m(x) >= alpha`` everywhere.

    The new loop weight is ``max(mu_xx, alpha * s / (1 - alpha))`` where ``s``
    is the off-diagonal weight at ``x``. A graph that already meets the target
    is returned as is.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    loops = g.loops
    off = g.measure - loops
    target = alpha * off / (1 - alpha)
    if np.all(loops / g.measure >= alpha - 1e-12):
        return g
    new_loops = np.maximum(loops, target)
    w = g.weights - sp.diags(loops) + sp.diags(new_loops)
    return WeightedGraph(sp.csr_matrix(w), coords=g.coords)


def _grid_graph(dim, side):
    n = side**dim
    idx = np.arange(n).reshape((side,) * dim)
    rows, cols = [], []
    for axis in range(dim):
        a = np.take(idx, range(side - 1), axis=axis).ravel()
        b = np.take(idx, range(1, side), axis=axis).ravel()
        rows.append(a)
        cols.append(b)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    coords = np.stack(np.unravel_index(np.arange(n), (side,) * dim), axis=1)
    return sp.csr_matrix(w + w.T), coords.astype(float)


def _cycle_graph(n):
    r = np.arange(n)
    w = sp.coo_matrix((np.ones(n), (r, (r + 1) % n)), shape=(n, n))
    ang = 2 * np.pi * r / n
    return sp.csr_matrix(w + w.T), np.stack([np.cos(ang), np.sin(ang)], axis=1)


def sierpinski_edges(level):
    """Vertices (integer triangular coordinates) and edges of the level-``L`` prefractal."""
    tri = [((0, 0), (1, 0)), ((0, 0), (0, 1)), ((1, 0), (0, 1))]
    edges = set(tri)
    for lev in range(1, level + 1):
        h = 2 ** (lev - 1)
        shifted = set()
        for (a, b) in edges:
            for dx, dy in ((h, 0), (0, h)):
                shifted.add(((a[0] + dx, a[1] + dy), (b[0] + dx, b[1] + dy)))
        edges |= shifted
    verts = sorted({v for e in edges for v in e})
    return verts, sorted(edges)


def _sierpinski_graph(level):
    verts, edges = sierpinski_edges(level)
    index = {v: i for i, v in enumerate(verts)}
    r = np.array([index[a] for a, _ in edges])
    c = np.array([index[b] for _, b in edges])
    n = len(verts)
    w = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    v = np.array(verts, dtype=float)
    # map triangular coordinates to the plane for plotting
    coords = np.stack([v[:, 0] + 0.5 * v[:, 1], v[:, 1] * math.sqrt(3) / 2], axis=1)
    return sp.csr_matrix(w + w.T), coords


def free_product(g1: WeightedGraph, g2: WeightedGraph) -> WeightedGraph:
    """Graph on ``V1 x V2`` with ``mu = mu1 (x) mu2``; vertex ``(a, b)`` has id ``a*n2 + b``."""
    w = sp.kron(g1.weights, g2.weights, format="csr")
    return WeightedGraph(w, max_degree=g1.max_degree * g2.max_degree)


def build(spec: BuilderSpec) -> Built:
    """Build the graph described by ``spec`` and attach its quasi-metric.

    Single families get unit edge weights followed by ``lazify(alpha)``.
    Free products lazify each factor and multiply the weights; the product
    itself is not lazified again so that the measure factorizes.
    """
    fam = spec.family
    if fam == "free_product":
        b1, b2 = (build(f) for f in spec.params["factors"])
        g = free_product(b1.graph, b2.graph)
        q = QuasiMetric.product(b1.graph, b1.metric, b2.graph, b2.metric)
        return Built(g, q, spec)
    if fam == "lattice":
        w, coords = _grid_graph(spec.params["dim"], spec.params["side"])
    elif fam == "path":
        w, coords = _grid_graph(1, spec.params["n"])
    elif fam == "cycle":
        w, coords = _cycle_graph(spec.params["n"])
    else:
        w, coords = _sierpinski_graph(spec.params["level"])
    g = lazify(WeightedGraph(w, coords=coords), spec.alpha)
    return Built(g, QuasiMetric.constant(spec.default_beta), spec)


def sierpinski_counts(level):
    """Expected ``(vertices, edges)`` of the level-``L`` prefractal."""
    return 3 * (3**level + 1) // 2, 3 ** (level + 1)


def corners(level):
    """Vertex ids of the three outer corners of the level-``L`` gasket."""
    verts, _ = sierpinski_edges(level)
    s = 2**level
    index = {v: i for i, v in enumerate(verts)}
    return [index[(0, 0)], index[(s, 0)], index[(0, s)]]


def product_pairs(n1, n2):
    """All ``(a, b)`` pairs in vertex-id order of :func:`free_product`."""
    return list(itertools.product(range(n1), range(n2)))
