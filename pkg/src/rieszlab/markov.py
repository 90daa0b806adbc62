"""The Markov operator, iterated kernels and functional calculus of ``P``.

Two evaluation paths are provided.  The dense spectral path diagonalizes the
symmetrized operator ``D^{-1/2} W D^{-1/2}`` and is exact up to rounding; it is
limited to ``SPECTRAL_LIMIT`` vertices.  The series path applies power series
in ``P`` matrix-free with a certified tail bound.
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .graph import WeightedGraph

SPECTRAL_LIMIT = 4000
ALL_PAIRS_LIMIT = 1500


class MarkovOperator:
    """``Pf(x) = sum_y p(x, y) f(y) m(y)``, applied through the sparse transition matrix."""

    def __init__(self, g: WeightedGraph):
        self.graph = g
        self.matrix = g.transition

    def __call__(self, f):
        return self.matrix @ f

    def adjoint(self, r):
        """Push a row (measure-like) vector one step: ``r P``."""
        return self.matrix.T @ r

    def laplacian(self, f):
        return f - self.matrix @ f

    def power(self, f, k):
        for _ in range(k):
            f = self.matrix @ f
        return f


def markov(g: WeightedGraph) -> MarkovOperator:
    return MarkovOperator(g)


@dataclass(frozen=True)
class KernelField:
    """Kernel rows ``values[k, i, y] = p_k(sources[i], y)`` for ``k = 0..K``."""

    sources: np.ndarray
    values: np.ndarray

    @property
    def steps(self) -> int:
        return self.values.shape[0] - 1

    def at(self, k, x_index=0):
        return self.values[k, x_index]

    def mass_defect(self, measure):
        """``max |sum_y p_k(x, y) m(y) - 1|`` over all stored rows."""
        return float(np.abs(self.values @ measure - 1).max())


def kernel_rows(g: WeightedGraph, sources, K, steps=None) -> KernelField:
    """Iterate ``p_{k+1}(x, .)`` from ``p_0(x, y) = delta_xy / m(y)``.

    Parameters
    ----------
    g : WeightedGraph
    sources : int or sequence of int
    K : int
        Last time computed.
    steps : sequence of int, optional
        Store only these times (all of ``0..K`` by default).
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    src = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    m = g.measure
    pt = sp.csr_matrix(g.transition.T)
    # r[y] = P^k(x, y) = p_k(x, y) m(y)
    r = np.zeros((g.n, len(src)))
    r[src, np.arange(len(src))] = 1.0
    keep = range(K + 1) if steps is None else sorted(set(steps))
    keep_set = set(keep)
    out = np.empty((len(keep), len(src), g.n))
    j = 0
    for k in range(K + 1):
        if k > 0:
            r = pt @ r
        if k in keep_set:
            out[j] = (r / m[:, None]).T
            j += 1
    return KernelField(src, out)


def kernel_diagonal(g: WeightedGraph, x, times):
    """``p_t(x, x)`` for each ``t`` in ``times``."""
    times = np.asarray(times, dtype=int)
    uniq = np.unique(times)
    kf = kernel_rows(g, x, int(uniq[-1]), steps=uniq)
    return kf.values[np.searchsorted(uniq, times), 0, x]


def laplacian_power_apply(g: WeightedGraph, f, j, k):
    """``(k Delta)^j P^{k-1} f`` by repeated sparse application."""
    if j < 0 or k < 1:
        raise ValueError("need j >= 0 and k >= 1")
    P = g.transition
    u = np.asarray(f, dtype=float)
    for _ in range(k - 1):
        u = P @ u
    for _ in range(j):
        u = k * (u - P @ u)
    return u


def time_difference(g: WeightedGraph, f, k):
    """``D(1) P^{k-1} f = P^k f - P^{k-1} f``."""
    P = g.transition
    u = laplacian_power_apply(g, f, 0, k)
    return P @ u - u


# dense spectral path -------------------------------------------------------


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of ``P`` on ``L^2(m)``, sorted so that ``lam[0] = 1``.

    ``vecs`` holds orthonormal eigenvectors of the symmetrized operator;
    the m-orthonormal eigenfunctions are ``vecs / sqrt(m)``.
    """

    lam: np.ndarray
    vecs: np.ndarray
    sqrt_m: np.ndarray

    @property
    def gap(self) -> float:
        return float(1 - self.lam[1]) if len(self.lam) > 1 else 1.0

    @property
    def radius(self) -> float:
        """Spectral radius of ``P`` on mean-zero functions."""
        if len(self.lam) == 1:
            return 0.0
        return float(max(abs(self.lam[1]), abs(self.lam[-1])))

    def eigenfunction(self, i):
        return self.vecs[:, i] / self.sqrt_m

    def coefficients(self, f):
        return self.vecs.T @ (self.sqrt_m[:, None] * f if f.ndim == 2 else self.sqrt_m * f)

    def synthesize(self, c):
        out = self.vecs @ c
        return out / (self.sqrt_m[:, None] if out.ndim == 2 else self.sqrt_m)


_spectral_cache: "weakref.WeakKeyDictionary[WeightedGraph, SpectralDecomposition]" = (
    weakref.WeakKeyDictionary()
)
_spectral_lock = threading.Lock()


class TooLargeError(RuntimeError):
    pass


def spectral(g: WeightedGraph) -> SpectralDecomposition:
    """Dense eigendecomposition of ``P`` (cached per graph)."""
    with _spectral_lock:
        dec = _spectral_cache.get(g)
        if dec is not None:
            return dec
        if g.n > SPECTRAL_LIMIT:
            raise TooLargeError(
                f"dense spectral path limited to n <= {SPECTRAL_LIMIT} (n = {g.n}); use series_apply"
            )
        s = np.sqrt(g.measure)
        sym = (sp.diags(1 / s) @ g.weights @ sp.diags(1 / s)).toarray()
        sym = 0.5 * (sym + sym.T)
        lam, vecs = np.linalg.eigh(sym)
        lam, vecs = lam[::-1].copy(), vecs[:, ::-1].copy()
        # the top eigenvector is sqrt(m) up to sign; pin it exactly
        vecs[:, 0] = s / np.linalg.norm(s)
        lam[0] = 1.0
        dec = SpectralDecomposition(lam, vecs, s)
        _spectral_cache[g] = dec
        return dec


def spectral_apply(g: WeightedGraph, phi: Callable, f):
    """``phi(P) f = sum_i phi(lam_i) <f, e_i>_m e_i``.

    ``f`` may be a vector or an ``(n, r)`` array of columns. ``phi`` must accept
    an array of eigenvalues.
    """
    dec = spectral(g)
    f = np.asarray(f, dtype=float)
    c = dec.coefficients(f)
    w = np.asarray(phi(dec.lam), dtype=float)
    c = w[:, None] * c if c.ndim == 2 else w * c
    return dec.synthesize(c)


def spectral_matrix(g: WeightedGraph, phi: Callable) -> np.ndarray:
    """Dense matrix of ``phi(P)`` acting on vertex functions."""
    dec = spectral(g)
    w = np.asarray(phi(dec.lam), dtype=float)
    mid = (dec.vecs * w) @ dec.vecs.T
    return mid * (dec.sqrt_m[None, :] / dec.sqrt_m[:, None])


def mean(g: WeightedGraph, f):
    """m-weighted mean ``<f, 1>_m / <1, 1>_m``."""
    m = g.measure
    return (m @ f) / m.sum()


def project_mean_zero(g: WeightedGraph, f):
    return f - mean(g, f)


def mean_zero_radius(g: WeightedGraph) -> float:
    """Spectral radius of ``P`` restricted to mean-zero functions."""
    if g.n <= SPECTRAL_LIMIT:
        return spectral(g).radius
    s = np.sqrt(g.measure)
    sym = sp.diags(1 / s) @ g.weights @ sp.diags(1 / s)
    top = eigsh(sym, k=2, which="LA", return_eigenvectors=False)
    low = eigsh(sym, k=1, which="SA", return_eigenvectors=False)
    return float(max(abs(np.sort(top)[0]), abs(low[0])))


# series path ---------------------------------------------------------------


class SeriesResult(NamedTuple):
    value: np.ndarray
    terms: int
    tail_bound: float


class SeriesDivergenceError(RuntimeError):
    pass


def binomial_coefficients(gamma, count):
    """First ``count`` Taylor coefficients of ``(1 - z)^gamma``."""
    a = np.empty(count)
    a[0] = 1.0
    for k in range(count - 1):
        a[k + 1] = a[k] * (k - gamma) / (k + 1)
    return a


def binomial_coefficient(gamma) -> Callable[[int], float]:
    """Callable ``k -> [z^k] (1 - z)^gamma`` using a running product."""
    cache = [1.0]

    def coef(k):
        while len(cache) <= k:
            j = len(cache) - 1
            cache.append(cache[-1] * (j - gamma) / (j + 1))
        return cache[k]

    return coef


def series_apply(
    g: WeightedGraph,
    coefficients: Sequence[float] | Callable[[int], float],
    f,
    tail_tol=1e-8,
    radius=1.0,
    ratio_limit=None,
    max_terms=100_000,
    operator=None,
) -> SeriesResult:
    """Evaluate ``sum_k c_k P^k f`` matrix-free.

    Parameters
    ----------
    coefficients : sequence or callable
        A finite sequence is summed exactly.  A callable ``k -> c_k`` is summed
        until the tail bound drops below ``tail_tol``.
    radius : float
        Bound on ``|lam|`` over the spectral support of ``f`` (1 in general,
        smaller for mean-zero inputs).
    ratio_limit : float, optional
        Known ``limsup |c_{k+1} / c_k|``; used to make the tail bound rigorous
        for coefficient sequences whose ratios increase.
    operator : callable, optional
        Replaces ``P`` (used to apply series in ``P`` after another factor).

    Returns
    -------
    SeriesResult
        ``value``, number of ``terms`` and the relative ``tail_bound``: the sum
        of omitted terms is at most ``tail_bound * ||f||_2``.
    """
    P = operator if operator is not None else (lambda v, M=g.transition: M @ v)
    u = np.asarray(f, dtype=float)
    if not callable(coefficients):
        c = np.asarray(coefficients, dtype=float)
        acc = c[0] * u
        for ck in c[1:]:
            u = P(u)
            acc = acc + ck * u
        return SeriesResult(acc, len(c), 0.0)
    acc = coefficients(0) * u
    rk = 1.0
    for k in range(1, max_terms + 1):
        ck, cn = coefficients(k), coefficients(k + 1)
        q = abs(cn / ck) * radius if ck != 0 else 0.0
        if ratio_limit is not None:
            q = max(q, ratio_limit * radius)
        rk *= radius
        if q < 1:
            tail = abs(ck) * rk / (1 - q)
            if tail <= tail_tol:
                return SeriesResult(acc, k, tail)
        u = P(u)
        acc = acc + ck * u
    raise SeriesDivergenceError(
        f"series tail above {tail_tol:g} after {max_terms} terms "
        f"(|c_k| = {abs(coefficients(max_terms)):.3g}, radius = {radius:.6g})"
    )


def resolvent_coefficients(s) -> Callable[[int], float]:
    """``(I + s Delta)^{-1} = sum_k (1+s)^{-1} (s/(1+s))^k P^k``."""
    t = s / (1 + s)
    return lambda k: t**k / (1 + s)


def analyticity_constant(g: WeightedGraph, ks) -> np.ndarray:
    """``k * ||Delta P^k||_{2 -> 2}`` from the spectrum, for each ``k``."""
    lam = spectral(g).lam
    return np.array([k * np.max(np.abs((1 - lam) * lam**k)) for k in ks])


def truncation_length(tol, ratio) -> int:
    """Smallest ``L`` with ``ratio^L <= tol``."""
    if not 0 <= ratio < 1:
        raise ValueError("ratio must lie in [0, 1)")
    if ratio == 0:
        return 1
    return max(1, math.ceil(math.log(tol) / math.log(ratio)))
