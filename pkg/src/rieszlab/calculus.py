"""Differential calculus on weighted graphs.

One-forms are stored as arrays aligned with the CSR entries of the weight
matrix, so ``F.values[i]`` is the value on the directed edge
``(row[i], col[i])``.  Norms follow the tangent-space convention
``|F_x|^2 = 1/2 sum_y p(x, y) F(x, y)^2 m(y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import markov
from .graph import WeightedGraph


@lru_cache(maxsize=32)
def _edge_layout(g: WeightedGraph):
    w = g.weights
    rows = np.repeat(np.arange(g.n), np.diff(w.indptr))
    cols = w.indices
    # position of (y, x) for the entry (x, y)
    pos = sp.csr_matrix((np.arange(w.nnz, dtype=float) + 1, w.indices, w.indptr), shape=w.shape)
    # the weight matrix is symmetric, so its transpose has the same sparsity layout
    t = pos.T.tocsr()
    t.sort_indices()
    flip = t.data.astype(np.int64) - 1
    return rows, cols, flip


def edge_rows(g):
    return _edge_layout(g)[0]


def edge_cols(g):
    return _edge_layout(g)[1]


@dataclass(frozen=True, eq=False)
class OneForm:
    """Antisymmetric function on directed edges (loops carry 0)."""

    graph: WeightedGraph
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.graph.weights.nnz,):
            raise ValueError("form values must align with the stored edges")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, g):
        return cls(g, np.zeros(g.weights.nnz))

    @classmethod
    def from_function(cls, g, func):
        """Evaluate ``func(x, y)`` on every directed edge."""
        rows, cols, _ = _edge_layout(g)
        return cls(g, np.array([func(int(x), int(y)) for x, y in zip(rows, cols)]))

    def antisymmetry_defect(self) -> float:
        _, _, flip = _edge_layout(self.graph)
        return float(np.abs(self.values + self.values[flip]).max(initial=0.0))

    def is_antisymmetric(self, tol=1e-12) -> bool:
        scale = max(1.0, float(np.abs(self.values).max(initial=0.0)))
        return self.antisymmetry_defect() <= tol * scale

    def __call__(self, x, y):
        w = self.graph.weights
        lo, hi = w.indptr[x], w.indptr[x + 1]
        i = np.searchsorted(w.indices[lo:hi], y)
        if i == hi - lo or w.indices[lo + i] != y:
            raise KeyError(f"({x}, {y}) is not an edge")
        return float(self.values[lo + i])

    def __add__(self, other):
        return OneForm(self.graph, self.values + other.values)

    def __sub__(self, other):
        return OneForm(self.graph, self.values - other.values)

    def __mul__(self, c):
        return OneForm(self.graph, c * self.values)

    __rmul__ = __mul__

    def pointwise_norm(self) -> np.ndarray:
        """``|F_x|_{T_x}`` at every vertex."""
        return form_pointwise_norm(self)

    def norm(self, p=2) -> float:
        """``(sum_x |F_x|^p m(x))^{1/p}``."""
        return lp_norm(self.graph, self.pointwise_norm(), p)

    def rows(self):
        """Directed-edge table ``(x, y, F(x, y))``."""
        r, c, _ = _edge_layout(self.graph)
        return r, c, self.values


def lp_norm(g: WeightedGraph, f, p=2) -> float:
    """``L^p(m)`` norm of a vertex function (``p = inf`` allowed)."""
    f = np.abs(np.asarray(f, dtype=float))
    if np.isinf(p):
        return float(f.max())
    return float((g.measure @ f**p) ** (1 / p))


def inner(g: WeightedGraph, f, h) -> float:
    """``<f, h>_{L^2(m)}``."""
    return float(g.measure @ (np.asarray(f) * np.asarray(h)))


def form_inner(F: OneForm, G: OneForm) -> float:
    """``<F, G>_{L^2(T)} = 1/2 sum_{x,y} mu_xy F(x,y) G(x,y)``."""
    return 0.5 * float(F.graph.weights.data @ (F.values * G.values))


def form_pointwise_norm(F: OneForm) -> np.ndarray:
    g = F.graph
    rows = edge_rows(g)
    s = np.bincount(rows, weights=g.weights.data * F.values**2, minlength=g.n)
    return np.sqrt(0.5 * s / g.measure)


def differential(g: WeightedGraph, f) -> OneForm:
    """``df(x, y) = f(x) - f(y)``."""
    f = np.asarray(f, dtype=float)
    rows, cols, _ = _edge_layout(g)
    return OneForm(g, f[rows] - f[cols])


def codifferential(F: OneForm, check=True) -> np.ndarray:
    """``d*F(x) = sum_y p(x, y) F(x, y) m(y)``."""
    if check and not F.is_antisymmetric():
        raise ValueError(f"form is not antisymmetric (defect {F.antisymmetry_defect():.3g})")
    g = F.graph
    s = np.bincount(edge_rows(g), weights=g.weights.data * F.values, minlength=g.n)
    return s / g.measure


def gradient_length(g: WeightedGraph, f) -> np.ndarray:
    """``grad f(x) = (1/2 sum_y p(x, y) |f(y) - f(x)|^2 m(y))^{1/2}``."""
    return form_pointwise_norm(differential(g, f))


def laplacian(g: WeightedGraph, f):
    return f - g.transition @ f


# composite operators --------------------------------------------------------


def resolvent(g, s, f, method="spectral", tail_tol=1e-12):
    """``(I + s Delta)^{-1} f``."""
    if s <= 0:
        raise ValueError("s must be positive")
    if method == "spectral":
        return markov.spectral_apply(g, lambda lam: 1 / (1 + s * (1 - lam)), f)
    return markov.series_apply(g, markov.resolvent_coefficients(s), f, tail_tol).value


def resolvent_sqrt(g, s, f, method="spectral", tail_tol=1e-12):
    """``(I + s Delta)^{-1/2} f``.

    The series path writes the operator as
    ``(1+s)^{-1/2} (I - t P)^{-1/2}`` with ``t = s / (1 + s)`` and expands
    ``(1 - z)^{-1/2}``.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if method == "spectral":
        return markov.spectral_apply(
            g, lambda lam: 1 / np.sqrt(1 + s * np.clip(1 - lam, 0, None)), f
        )
    return markov.series_apply(
        g, resolvent_sqrt_coefficients(s), f, tail_tol, ratio_limit=s / (1 + s)
    ).value


def resolvent_sqrt_coefficients(s):
    t = s / (1 + s)
    a = markov.binomial_coefficient(-0.5)
    scale = (1 + s) ** -0.5
    return lambda k: scale * a(k) * t**k


def _frac_power(beta):
    def phi(lam):
        base = np.clip(1 - lam, 0, None)
        out = np.zeros_like(base)
        pos = base > 0
        out[pos] = base[pos] ** beta
        return out

    return phi


def _inverse_power(alpha):
    # (1 - lam)^{-alpha} with the constants sent to 0
    def phi(lam):
        out = np.zeros_like(lam)
        base = 1 - lam
        keep = base > 1e-14
        keep[0] = False
        out[keep] = base[keep] ** -alpha
        return out

    return phi


def fractional_laplacian(g, beta, f, method="spectral", tail_tol=1e-12, radius=None):
    """``Delta^beta f`` for ``beta > 0``.

    The series path uses ``Delta^beta = sum_l a_l P^l Delta^{ceil(beta)}`` with
    ``a_l`` the Taylor coefficients of ``(1 - z)^{beta - ceil(beta)}``; it
    converges geometrically on mean-zero inputs where ``|lam| <= radius < 1``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if float(beta).is_integer():
        u = np.asarray(f, dtype=float)
        for _ in range(int(beta)):
            u = laplacian(g, u)
        return u
    if method == "spectral":
        return markov.spectral_apply(g, _frac_power(beta), f)
    kappa = int(np.ceil(beta))
    gamma = beta - kappa
    u = markov.project_mean_zero(g, np.asarray(f, dtype=float))
    for _ in range(kappa):
        u = laplacian(g, u)
    if radius is None:
        radius = markov.mean_zero_radius(g)
    return markov.series_apply(
        g, markov.binomial_coefficient(gamma), u, tail_tol, radius=radius, ratio_limit=1.0
    ).value


def inverse_laplacian_power(g, alpha, f):
    """``Delta^{-alpha} f`` on the mean-zero part of ``f``."""
    return markov.spectral_apply(g, _inverse_power(alpha), markov.project_mean_zero(g, f))


def riesz_transform(g, f) -> OneForm:
    """``d Delta^{-1/2} f`` after projecting out the mean of ``f``."""
    return differential(g, inverse_laplacian_power(g, 0.5, f))


def riesz_length(g, f) -> np.ndarray:
    """``grad Delta^{-1/2} f`` pointwise."""
    return riesz_transform(g, f).pointwise_norm()


def gradient_direction(g, f) -> OneForm:
    """``phi_f = df / grad f`` (zero where ``grad f`` vanishes)."""
    df = differential(g, f)
    grad = form_pointwise_norm(df)
    rows = edge_rows(g)
    inv = np.zeros_like(grad)
    nz = grad > 0
    inv[nz] = 1 / grad[nz]
    return OneForm(g, df.values * inv[rows])


def linearized_gradient(g, phi: OneForm, f, tol=1e-12) -> np.ndarray:
    """``grad_phi f(x) = sum_y p(x, y) df(x, y) phi(x, y) m(y)``.

    ``phi`` must satisfy ``sup_x |phi(x, .)|_{T_x} <= 1``.
    """
    bound = phi.pointwise_norm().max(initial=0.0)
    if bound > 1 + tol:
        raise ValueError(f"weight bound violated: sup |phi_x| = {bound:.6g} > 1")
    df = differential(g, f)
    s = np.bincount(edge_rows(g), weights=g.weights.data * df.values * phi.values, minlength=g.n)
    return s / g.measure


def gradient_operator(g: WeightedGraph) -> sp.csr_matrix:
    """Sparse matrix ``G`` with ``(G f)`` the form ``df`` scaled so that
    ``||G f||_2 = ||df||_{L^2(T)}``: row ``i`` carries ``sqrt(mu_i / 2)``."""
    rows, cols, _ = _edge_layout(g)
    k = g.weights.nnz
    c = np.sqrt(0.5 * g.weights.data)
    idx = np.arange(k)
    return sp.csr_matrix(
        (np.concatenate([c, -c]), (np.concatenate([idx, idx]), np.concatenate([rows, cols]))),
        shape=(k, g.n),
    )
