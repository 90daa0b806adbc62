"""Square functionals on the discrete cone and the Hardy-Littlewood maximal function.

A tent field lives on ``Gamma x {1, ..., K}``.  The cone at ``x`` is
``{(y, k) : rho(x, y) < k}`` and the tent over a set ``B`` is
``{(y, k) : rho(y, B^c) >= k}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import markov
from .calculus import gradient_length
from .graph import QuasiMetric, WeightedGraph, distance_to_set


@dataclass(frozen=True)
class TentField:
    """Values ``values[k - 1, y] = F(y, k)`` for ``k = 1..K_max``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("tent field must be a (K_max, n) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("tent field must be finite")
        object.__setattr__(self, "values", v)

    @property
    def K_max(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, K_max, n):
        return cls(np.zeros((K_max, n)))

    def __add__(self, other):
        return TentField(self.values + other.values)

    def __sub__(self, other):
        return TentField(self.values - other.values)

    def __mul__(self, c):
        return TentField(c * self.values)

    __rmul__ = __mul__


def tent_norm2(g: WeightedGraph, F: TentField) -> float:
    """``||F||_{T^2} = (sum_{y,k} m(y)/k |F(y,k)|^2)^{1/2}``."""
    k = np.arange(1, F.K_max + 1)[:, None]
    return float(np.sqrt(np.sum(g.measure * F.values**2 / k)))


def tent_inner(g: WeightedGraph, F: TentField, G: TentField) -> float:
    k = np.arange(1, F.K_max + 1)[:, None]
    return float(np.sum(g.measure * F.values * G.values / k))


def _cone_volumes(q, g, K):
    """``masks[k-1]`` boolean ``rho < k`` and volumes ``V[k-1, x] = V(x, k)``."""
    rmat = q.matrix(g)
    for k in range(1, K + 1):
        mask = rmat < k
        yield k, mask, mask @ g.measure


def tent_A(g: WeightedGraph, q: QuasiMetric, F: TentField) -> np.ndarray:
    """Conical square functional
    ``A F(x) = (sum_{rho(x,y) < k} m(y) / (k V(x,k)) |F(y,k)|^2)^{1/2}``."""
    out = np.zeros(g.n)
    vals = F.values
    for k, mask, vol in _cone_volumes(q, g, F.K_max):
        row = vals[k - 1]
        if not row.any():
            continue
        out += (mask @ (g.measure * row**2)) / (k * vol)
    return np.sqrt(out)


def tent_T1_norm(g, q, F) -> float:
    return float(g.measure @ tent_A(g, q, F))


class BallFamily(NamedTuple):
    """Every distinct ball: ``members[i]`` is a boolean mask, ``volume[i]`` its measure."""

    centers: np.ndarray
    radii: np.ndarray
    members: np.ndarray
    volume: np.ndarray


def ball_family(g: WeightedGraph, q: QuasiMetric) -> BallFamily:
    """All balls ``{y : rho(c, y) <= r}`` with ``r`` a value of ``rho(c, .)``.

    Open balls of every real radius produce exactly these sets on a finite
    graph, so a supremum over them is a supremum over all balls.
    """
    rmat = q.matrix(g)
    centers, radii, members = [], [], []
    seen = set()
    for c in range(g.n):
        for r in np.unique(rmat[c]):
            mask = rmat[c] <= r
            key = np.packbits(mask).tobytes()
            if key in seen:
                continue
            seen.add(key)
            centers.append(c)
            radii.append(r)
            members.append(mask)
    members = np.array(members)
    return BallFamily(np.array(centers), np.array(radii), members, members @ g.measure)


def tent_depth(g: WeightedGraph, q: QuasiMetric, inside) -> np.ndarray:
    """``rho(y, S^c)`` for every vertex ``y`` (infinite when ``S`` is everything)."""
    inside = np.asarray(inside, dtype=bool)
    return distance_to_set(q, g, np.flatnonzero(~inside))


def hat_mask(depth, K_max) -> np.ndarray:
    """Boolean ``(K_max, n)`` mask of the tent ``{(y, k) : depth(y) >= k}``."""
    k = np.arange(1, K_max + 1)[:, None]
    return depth[None, :] >= k


def tent_C(g: WeightedGraph, q: QuasiMetric, F: TentField, family=None) -> np.ndarray:
    """Carleson functional
    ``C F(x) = sup_{B ∋ x} (V(B)^{-1} sum_{(y,k) in hat B} m(y)/k |F(y,k)|^2)^{1/2}``."""
    fam = family if family is not None else ball_family(g, q)
    k = np.arange(1, F.K_max + 1)[:, None]
    # cum[j, y] = sum_{k <= j} m(y)/k |F(y,k)|^2, with cum[0] = 0
    dens = g.measure * F.values**2 / k
    cum = np.vstack([np.zeros(g.n), np.cumsum(dens, axis=0)])
    out = np.zeros(g.n)
    rmat = q.matrix(g)
    for mask, vol in zip(fam.members, fam.volume):
        if mask.all():
            depth = np.full(g.n, np.inf)
        else:
            depth = rmat[:, ~mask].min(axis=1)
        level = np.minimum(np.floor(depth), F.K_max).astype(int)
        val = math.sqrt(cum[level, np.arange(g.n)].sum() / vol)
        np.maximum(out, np.where(mask, val, 0.0), out=out)
    return out


def maximal_function(g: WeightedGraph, q: QuasiMetric, f) -> np.ndarray:
    """Uncentred maximal function ``M f(x) = sup_{B ∋ x} V(B)^{-1} sum_B |f| m``."""
    f = np.abs(np.asarray(f, dtype=float))
    rmat = q.matrix(g)
    m = g.measure
    out = np.zeros(g.n)
    for c in range(g.n):
        r = rmat[c]
        order = np.argsort(r, kind="stable")
        rs = r[order]
        cm = np.cumsum(m[order])
        cf = np.cumsum((f * m)[order])
        # last index of each group of equal rho: closed balls
        ends = np.flatnonzero(np.r_[rs[1:] != rs[:-1], True])
        avg = cf[ends] / cm[ends]
        best = np.maximum.accumulate(avg[::-1])[::-1]
        group = np.searchsorted(rs[ends], r, side="left")
        np.maximum(out, best[group], out=out)
    return out


# Littlewood-Paley functionals ------------------------------------------------


def lp_transform(g: WeightedGraph, beta, f, K_max) -> TentField:
    """``F(., k) = (k Delta)^beta P^{k-1} f`` for ``k = 1..K_max`` (spectral path)."""
    dec = markov.spectral(g)
    f = np.asarray(f, dtype=float)
    c = dec.coefficients(f)
    base = np.clip(1 - dec.lam, 0, None)
    with np.errstate(divide="ignore"):
        powb = np.where(base > 0, base**beta, 0.0)
    out = np.empty((K_max, g.n))
    lamk = np.ones_like(dec.lam)
    for k in range(1, K_max + 1):
        out[k - 1] = k**beta * dec.synthesize(powb * lamk * c)
        lamk = lamk * dec.lam
    return TentField(out)


def lp_transform_iterative(g: WeightedGraph, j: int, f, K_max) -> TentField:
    """Integer-order ``(k Delta)^j P^{k-1} f`` by sparse iteration."""
    P = g.transition
    u = np.asarray(f, dtype=float)
    out = np.empty((K_max, g.n))
    for k in range(1, K_max + 1):
        v = u
        for _ in range(j):
            v = v - P @ v
        out[k - 1] = k**j * v
        u = P @ u
    return TentField(out)


def default_K_max(g, q) -> int:
    """Diameter of the graph in the ``rho`` scale."""
    return max(1, int(math.ceil(q.matrix(g).max())))


def _inner_field(g, beta, f, K_max):
    if float(beta).is_integer() and g.n > markov.SPECTRAL_LIMIT:
        return lp_transform_iterative(g, int(beta), f, K_max)
    return lp_transform(g, beta, f, K_max)


def _tail_warning(name, full, half):
    tot = np.sqrt(np.sum(full**2))
    if tot > 0 and (tot - np.sqrt(np.sum(half**2))) > 0.01 * tot:
        warnings.warn(f"{name}: tail increment above 1% between K_max/2 and K_max", stacklevel=3)


def lp_functional_L(g, q, beta, f, K_max=None, check_tail=False) -> np.ndarray:
    """Conical Littlewood-Paley functional ``L_beta f = A[(k Delta)^beta P^{k-1} f]``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    K = default_K_max(g, q) if K_max is None else int(K_max)
    F = _inner_field(g, beta, f, K)
    out = tent_A(g, q, F)
    if check_tail and K >= 2:
        _tail_warning("L_beta", out, tent_A(g, q, TentField(F.values[: K // 2])))
    return out


def lp_functional_g(g, beta, f, K_max, check_tail=False) -> np.ndarray:
    """Vertical functional ``g_beta f(x) = (sum_k k^{2 beta - 1} |Delta^beta P^{k-1} f(x)|^2)^{1/2}``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    F = _inner_field(g, beta, f, int(K_max))
    k = np.arange(1, F.K_max + 1)[:, None]
    sq = F.values**2 / k
    out = np.sqrt(sq.sum(axis=0))
    if check_tail and F.K_max >= 2:
        _tail_warning("g_beta", out, np.sqrt(sq[: F.K_max // 2].sum(axis=0)))
    return out


# pseudo-gradient --------------------------------------------------------------


class PseudoGradient(NamedTuple):
    N: np.ndarray
    J: np.ndarray
    u: np.ndarray


def pseudo_gradient(g: WeightedGraph, p, f, k) -> PseudoGradient:
    """``J_k = -[d_k + Delta](u_k^p)`` and ``N_p = u_k^{2-p} J_k`` with ``u_k = P^{k-1} f``.

    With ``u_{k+1} = P u_k`` this is ``J_k = P(u_k^p) - (P u_k)^p``.
    """
    if not 1 < p <= 2:
        raise ValueError("p must lie in (1, 2]")
    if k < 1:
        raise ValueError("k must be >= 1")
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    if not f.any():
        raise ValueError("f must not vanish identically")
    P = g.transition
    u = markov.laplacian_power_apply(g, f, 0, k)
    up = u**p
    J = P @ up - (P @ u) ** p
    return PseudoGradient(u ** (2 - p) * J, J, u)


def neighbour_sum(g: WeightedGraph, h) -> np.ndarray:
    """``A h(x) = sum_{y ~ x} h(y)`` (loop included)."""
    pattern = g.weights.copy()
    pattern.data[:] = 1.0
    return pattern @ h


def domination_ratio(g: WeightedGraph, p, f, k) -> np.ndarray:
    """Pointwise ``|grad P^{k-1} f|^2 / (A N_p)`` (NaN where rounding dominates ``A N_p``)."""
    pg = pseudo_gradient(g, p, f, k)
    P = g.transition
    grad2 = gradient_length(g, pg.u) ** 2
    den = neighbour_sum(g, pg.N)
    # J is a difference of two nonnegative terms; bound its rounding error
    err = 8 * np.finfo(float).eps * (P @ pg.u**p + (P @ pg.u) ** p)
    den_err = neighbour_sum(g, pg.u ** (2 - p) * err)
    out = np.full(g.n, np.nan)
    ok = den > 1e3 * den_err
    out[ok] = grad2[ok] / den[ok]
    return out


def domination_constant(g: WeightedGraph, p, f, k) -> float:
    """``max_x |grad P^{k-1} f(x)|^2 / (A N_p)(x)`` over points where the ratio is resolved."""
    r = domination_ratio(g, p, f, k)
    return float(np.nanmax(r)) if np.any(np.isfinite(r)) else 0.0
