"""Atoms, molecules and atomic decompositions.

The tent decomposition is a stopping-time construction over the dyadic level
sets of ``A F``; the molecular decompositions push tent atoms through the
synthesis operator ``pi_{eta, beta}`` and certify every output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from . import markov
from .calculus import OneForm, differential, form_pointwise_norm, inverse_laplacian_power, lp_norm
from .functionals import TentField, hat_mask, lp_transform, tent_A, tent_norm2
from .graph import QuasiMetric, WeightedGraph, annulus, distance_to_set, growth_exponent, volume

CERT_SLACK = 1e-10


# E^1_0 atoms -------------------------------------------------------------------


@dataclass
class E1Certificate:
    valid: bool
    clause: str | None
    k: int
    norm_ratio: float
    atom: np.ndarray | None


def check_e1_atom(g: WeightedGraph, q: QuasiMetric, b, center, radius) -> E1Certificate:
    """Check ``supp b ⊂ B(x, k)`` and ``||b||_2 <= V(x, k)^{-1/2}``; build ``a = (I - P^k) b``.

    ``k`` is the radius rounded up to an integer.
    """
    k = int(math.ceil(radius))
    b = np.asarray(b, dtype=float)
    inside = q.row(g, center) < k
    vol = float(g.measure[inside].sum())
    ratio = lp_norm(g, b) * math.sqrt(vol)
    if np.any(b[~inside] != 0):
        return E1Certificate(False, "support", k, ratio, None)
    if ratio > 1 + CERT_SLACK:
        return E1Certificate(False, "norm", k, ratio, None)
    a = b - markov.laplacian_power_apply(g, b, 0, k + 1)
    return E1Certificate(True, None, k, ratio, a)


# tent atoms --------------------------------------------------------------------


@dataclass
class TentAtom:
    """A tent-space atom supported in the tent over the ball ``B(center, radius)``."""

    center: int
    radius: float
    members: np.ndarray
    volume: float
    values: TentField
    depth: np.ndarray = field(repr=False)

    def certificate(self, g: WeightedGraph) -> dict:
        hat = hat_mask(self.depth, self.values.K_max)
        outside = float(np.abs(self.values.values[~hat]).max(initial=0.0))
        size = tent_norm2(g, self.values) ** 2 * self.volume
        return {
            "support": outside == 0.0,
            "size_ratio": size,
            "valid": outside == 0.0 and size <= 1 + CERT_SLACK,
        }


@dataclass
class Decomposition:
    """``source ≈ sum_i coefficients[i] * reconstruct(pieces[i])``."""

    coefficients: np.ndarray
    pieces: list
    residual: float
    source_norm: float
    info: dict = field(default_factory=dict)

    @property
    def coefficient_sum(self) -> float:
        return float(np.abs(self.coefficients).sum())

    @property
    def ratio(self) -> float:
        return self.coefficient_sum / self.source_norm if self.source_norm > 0 else 0.0

    def __len__(self):
        return len(self.pieces)


def _whole_ball(g, q):
    # a ball containing every vertex, centred at a vertex of least eccentricity
    rmat = q.matrix(g)
    ecc = rmat.max(axis=1)
    c = int(np.argmin(ecc))
    return c, float(ecc[c]) + 1.0


def tent_atomic_decompose(g: WeightedGraph, q: QuasiMetric, F: TentField, tol=1e-8) -> Decomposition:
    """Decompose ``F`` into tent atoms.

    Level sets ``O_i = {A F > 2^i}`` are covered by the maximal balls
    ``B(x, rho(x, O_i^c))`` with centres taken in decreasing distance to the
    complement; a ball is kept only if its tent captures points of
    ``hat O_i \\ hat O_{i+1}`` not yet assigned.  Each piece is rescaled to
    saturate the atom size bound.
    """
    K = F.K_max
    AF = tent_A(g, q, F)
    t1 = float(g.measure @ AF)
    if not np.any(F.values):
        return Decomposition(np.zeros(0), [], 0.0, t1, {"levels": 0})
    pos = AF[AF > 0]
    i_lo = int(math.floor(math.log2(pos.min()))) - 1
    i_hi = int(math.floor(math.log2(AF.max())))
    rmat = q.matrix(g)
    support = F.values != 0
    prev_hat = None
    coeffs, pieces = [], []
    hats = {}

    def level_hat(i):
        if i not in hats:
            inside = AF > 2.0**i
            depth = distance_to_set(q, g, np.flatnonzero(~inside))
            hats[i] = (inside, depth, hat_mask(depth, K))
        return hats[i]

    for i in range(i_lo, i_hi + 1):
        inside, depth, hat = level_hat(i)
        _, _, hat_next = level_hat(i + 1)
        todo = hat & ~hat_next & support
        if prev_hat is None:
            # everything in the support lies in the lowest tent
            if np.any(support & ~hat):
                raise RuntimeError("support not contained in the lowest tent")
        prev_hat = hat
        if not todo.any():
            continue
        if inside.all():
            c, r = _whole_ball(g, q)
            balls = [(c, r, np.ones(g.n, dtype=bool), np.full(g.n, np.inf))]
        else:
            order = np.argsort(-depth[inside], kind="stable")
            cands = np.flatnonzero(inside)[order]
            balls = []
            for c in cands:
                r = depth[c]
                mem = rmat[c] < r
                bdepth = distance_to_set(q, g, np.flatnonzero(~mem))
                balls.append((int(c), float(r), mem, bdepth))
        level = todo.copy()
        chosen = []
        for c, r, mem, bdepth in balls:
            take = todo & hat_mask(bdepth, K)
            if not take.any():
                continue
            todo &= ~take
            if np.isfinite(r):
                r, mem, bdepth = _shrink(g, q, rmat[c], r, take, K)
            chosen.append((c, r, mem, bdepth, take))
            if not todo.any():
                break
        if todo.any():
            raise RuntimeError(f"level {i}: tent points left uncovered")
        if len(chosen) > 1:
            # one larger ball can be cheaper than many overlapping ones
            single = _single_cover(g, q, level, K)
            if _cover_cost(g, F, single) < _cover_cost(g, F, chosen):
                chosen = single
        for c, r, mem, bdepth, take in chosen:
            piece = np.where(take, F.values, 0.0)
            vol = float(g.measure[mem].sum())
            lam = math.sqrt(vol) * tent_norm2(g, TentField(piece))
            if lam == 0:
                continue
            coeffs.append(lam)
            pieces.append(TentAtom(c, r, np.flatnonzero(mem), vol, TentField(piece / lam), bdepth))
    coeffs = np.array(coeffs)
    recon = reconstruct_tent(g, coeffs, pieces, K)
    f2 = tent_norm2(g, F)
    residual = tent_norm2(g, F - recon) / f2 if f2 > 0 else 0.0
    if residual > tol:
        warnings.warn(f"tent reconstruction residual {residual:.3g} above tol {tol:g}", stacklevel=2)
    return Decomposition(coeffs, pieces, residual, t1, {"levels": i_hi - i_lo + 1})


def _cover_cost(g, F, chosen):
    return sum(
        math.sqrt(g.measure[mem].sum()) * tent_norm2(g, TentField(np.where(take, F.values, 0.0)))
        for _, _, mem, _, take in chosen
    )


def _single_cover(g, q, take, K):
    """Cheapest single ball (least volume) whose tent contains ``take``."""
    rmat = q.matrix(g)
    best = None
    for c in range(g.n):
        r, mem, bdepth = _shrink(g, q, rmat[c], np.inf, take, K)
        vol = g.measure[mem].sum()
        if best is None or vol < best[0]:
            best = (vol, c, r, mem, bdepth)
    _, c, r, mem, bdepth = best
    if not np.isfinite(r):
        c, r = _whole_ball(g, q)
    return [(c, r, mem, bdepth, take)]


def _shrink(g, q, row, r, take, K):
    """Smallest ball ``B(c, r')``, ``r' <= r``, whose tent still holds ``take``.

    The returned radius is the next distance value above the ball's members,
    the largest radius describing the same vertex set (so always >= 1).
    """
    vals = np.unique(row)
    for i, v in enumerate(vals[vals < r]):
        mem = row <= v
        bdepth = distance_to_set(q, g, np.flatnonzero(~mem))
        if not np.any(take & ~hat_mask(bdepth, K)):
            r2 = float(min(vals[i + 1], r)) if i + 1 < len(vals) else float(r)
            return r2, mem, bdepth
    mem = row < r
    return r, mem, distance_to_set(q, g, np.flatnonzero(~mem))


def reconstruct_tent(g, coeffs, pieces, K) -> TentField:
    out = np.zeros((K, g.n))
    for lam, a in zip(coeffs, pieces):
        out += lam * a.values.values
    return TentField(out)


# synthesis ------------------------------------------------------------------------


def synthesis_coefficients(eta: int, count: int) -> np.ndarray:
    """``c_l^eta`` for ``l = 1..count``: coefficients of ``(1 - z)^{-eta}`` so that
    ``sum_l c_l z^{l-1} = (1 - z)^{-eta}``."""
    c = np.empty(count)
    c[0] = 1.0
    for l in range(1, count):
        c[l] = c[l - 1] * (l + eta - 1) / l
    return c


def synthesis_coefficients_exact(eta: int, count: int) -> np.ndarray:
    l = np.arange(1, count + 1)
    return comb(l + eta - 2, eta - 1, exact=False)


def default_eta(d0, eps, beta) -> int:
    return int(math.ceil(d0 / 2 + eps + beta)) + 2


def _pi_weights(g, eta, beta, K):
    dec = markov.spectral(g)
    lam = dec.lam
    base = np.clip(1 - lam, 0, None)
    front = np.where(base > 0, base ** (eta - beta), 0.0) * (1 + lam) ** eta
    c = synthesis_coefficients(eta, K)
    l = np.arange(1, K + 1)
    powers = lam[:, None] ** (l[None, :] - 1)
    return front[:, None] * powers * (c / l**beta)[None, :]


def pi_synthesis(g: WeightedGraph, eta: int, beta, F: TentField, weights=None) -> np.ndarray:
    """``pi F = sum_l c_l^eta / l^beta  Delta^{eta - beta} (I + P)^eta P^{l-1} F(., l)``."""
    if eta <= beta:
        raise ValueError("eta must exceed beta")
    dec = markov.spectral(g)
    w = _pi_weights(g, eta, beta, F.K_max) if weights is None else weights
    coef = dec.coefficients(F.values.T)  # (n_eig, K)
    return dec.synthesize((w * coef).sum(axis=1))


def reconstruction_defect(z, eta, K) -> float:
    """``1 - sum_{l <= K} c_l (1 - z)^eta z^{l-1}`` for a scalar ``z`` in ``[0, 1)``."""
    c = synthesis_coefficients(eta, K)
    l = np.arange(K)
    return float(1 - np.sum(c * (1 - z) ** eta * z**l))


def pipeline_K_max(g: WeightedGraph, eta, tol, cap=20000) -> int:
    """Smallest ``K`` whose truncated reconstruction is within ``tol / 10`` on every mode."""
    z = markov.spectral(g).radius ** 2
    target = tol / 10
    # defect is monotone in z, so the worst mode is the largest |lam|
    term = (1 - z) ** eta
    s = 0.0
    for K in range(1, cap + 1):
        s += term
        if 1 - s <= target:
            return K
        term *= z * (K + eta - 1) / K
    raise RuntimeError(f"no truncation up to {cap} reaches {target:g}")


# molecules --------------------------------------------------------------------


@dataclass
class Molecule:
    """An ``eps``-molecule adapted to the ball ``B(center, k)``.

    ``b`` is the pre-molecule (a vertex function).  ``a`` is the realized
    molecule: a vertex function for ``kind='function'`` or a one-form for
    ``kind='form'``.
    """

    kind: str
    eps: float
    center: int
    k: float
    b: np.ndarray
    a: np.ndarray | OneForm
    graph: WeightedGraph = field(repr=False)
    metric: QuasiMetric = field(repr=False)
    scale: float = 1.0

    def realized_l1(self) -> float:
        if self.kind == "form":
            return lp_norm(self.graph, self.a.pointwise_norm(), 1)
        return lp_norm(self.graph, self.a, 1)


def annular_profile(g, q, b, center, k, eps):
    """Pairs ``(||b||_{L^2(C_j)}, 2^{-j eps} V(x, 2^j k)^{-1/2})`` for every occupied ``j``."""
    r = q.row(g, center)
    jmax = 0
    rmax = r.max()
    while 2.0 ** (q.bound + jmax) * k <= rmax:
        jmax += 1
    out = []
    m = g.measure
    for j in range(jmax + 1):
        idx = annulus(q, g, center, k, j)
        nb = math.sqrt(float(m[idx] @ b[idx] ** 2))
        bound = 2.0 ** (-j * eps) / math.sqrt(volume(q, g, center, 2.0**j * k))
        out.append((nb, bound))
    return out


@dataclass
class MoleculeCheck:
    valid: bool
    margin: float
    worst_j: int
    l1: float


def check_molecule(mol: Molecule) -> MoleculeCheck:
    """Evaluate every annular bound; ``margin`` is ``min_j bound_j / ||b||_{C_j}``."""
    prof = annular_profile(mol.graph, mol.metric, mol.b, mol.center, mol.k, mol.eps)
    ratios = [bd / nb if nb > 0 else np.inf for nb, bd in prof]
    j = int(np.argmin(ratios))
    margin = float(ratios[j])
    return MoleculeCheck(margin >= 1 - CERT_SLACK, margin, j, mol.realized_l1())


def molecule_constant(g, q, b, center, k, eps) -> float:
    """Smallest ``C`` with ``b / C`` satisfying every annular bound."""
    prof = annular_profile(g, q, b, center, k, eps)
    return max(nb / bd for nb, bd in prof)


def _function_molecule(g, q, pa, center, k, eps):
    # b = (I + (k Delta)^{-1}) pi(A), so that pi(A) = [I - (I + k Delta)^{-1}] b
    b = pa + inverse_laplacian_power(g, 1.0, pa) / k
    C = molecule_constant(g, q, b, center, k, eps)
    b = b / C
    a = b - markov.spectral_apply(g, lambda lam: 1 / (1 + k * (1 - lam)), b)
    return Molecule("function", eps, center, k, b, a, g, q, C)


def _form_molecule(g, q, pa, center, k, eps):
    # b = (I + (k Delta)^{-1})^{1/2} pi(A), so that d Delta^{-1/2} pi(A) = sqrt(k) d (I + k Delta)^{-1/2} b
    def phi(lam):
        base = np.clip(1 - lam, 0, None)
        out = np.zeros_like(base)
        nz = base > 1e-14
        nz[0] = False
        out[nz] = np.sqrt(1 + 1 / (k * base[nz]))
        return out

    b = markov.spectral_apply(g, phi, pa)
    C = molecule_constant(g, q, b, center, k, eps)
    b = b / C
    u = markov.spectral_apply(g, lambda lam: 1 / np.sqrt(1 + k * np.clip(1 - lam, 0, None)), b)
    a = differential(g, math.sqrt(k) * u)
    return Molecule("form", eps, center, k, b, a, g, q, C)


def _resolve_eta(g, q, eps, beta, eta):
    if eta is not None:
        if eta <= beta:
            raise ValueError("eta must exceed beta")
        return int(eta)
    return default_eta(growth_exponent(q, g), eps, beta)


def _molecular(g, q, f, beta, eps, tol, eta, kind, K_max):
    f = np.asarray(f, dtype=float)
    info = {}
    mu = markov.mean(g, f)
    if abs(mu) > 1e-12 * max(1.0, float(np.abs(f).max())):
        warnings.warn("input was not mean-zero; projected", stacklevel=3)
        info["projected_mean"] = float(mu)
    f = f - mu
    norm_f = lp_norm(g, f)
    if norm_f == 0:
        return Decomposition(np.zeros(0), [], 0.0, 0.0, info)
    eta = _resolve_eta(g, q, eps, beta, eta)
    K = pipeline_K_max(g, eta, tol) if K_max is None else int(K_max)
    F = lp_transform(g, beta, f, K)
    tent = tent_atomic_decompose(g, q, F, tol=1e-8)
    w = _pi_weights(g, eta, beta, K)
    dec = markov.spectral(g)
    coeffs, mols = [], []
    for lam, atom in zip(tent.coefficients, tent.pieces):
        coef = dec.coefficients(atom.values.values.T)
        pa = dec.synthesize((w * coef).sum(axis=1))
        k = atom.radius
        mol = (_form_molecule if kind == "form" else _function_molecule)(g, q, pa, atom.center, k, eps)
        mols.append(mol)
        coeffs.append(lam * mol.scale)
    coeffs = np.array(coeffs)
    if kind == "form":
        target = differential(g, inverse_laplacian_power(g, 0.5, f))
        recon = np.zeros_like(target.values)
        for c, mol in zip(coeffs, mols):
            recon += c * mol.a.values
        residual = OneForm(g, target.values - recon).norm() / target.norm()
    else:
        recon = np.zeros(g.n)
        for c, mol in zip(coeffs, mols):
            recon += c * mol.a
        residual = lp_norm(g, f - recon) / norm_f
    info.update(eta=eta, K_max=K, tent_atoms=len(tent), tent_residual=tent.residual)
    if residual > tol:
        warnings.warn(f"molecular reconstruction residual {residual:.3g} above tol {tol:g}", stacklevel=3)
    return Decomposition(coeffs, mols, residual, lp_norm(g, f, 1), info)


def molecular_decompose(g, q, f, beta=1.0, eps=1.0, tol=1e-6, eta=None, K_max=None) -> Decomposition:
    """Decompose a mean-zero ``f`` into ``eps``-molecules ``[I - (I + k Delta)^{-1}] b``.

    Pipeline: ``F(., l) = (l Delta)^beta P^{l-1} f``, tent atoms of ``F``, and
    ``pi_{eta, beta}`` of every atom; ``pi_{eta, beta} F = f`` up to the
    truncation at ``K_max`` (chosen from the spectral gap when omitted).
    """
    return _molecular(g, q, f, beta, eps, tol, eta, "function", K_max)


def riesz_hardy_map(g, q, f, eps=1.0, tol=1e-6, eta=None, K_max=None) -> Decomposition:
    """Decompose ``d Delta^{-1/2} f`` into form molecules ``sqrt(k) d (I + k Delta)^{-1/2} b``.

    The tent field is ``F(., l) = sqrt(l) P^{l-1} d^* G`` with
    ``G = d Delta^{-1/2} f``, which equals ``(l Delta)^{1/2} P^{l-1} f``.
    """
    return _molecular(g, q, f, 0.5, eps, tol, eta, "form", K_max)


def pi_operator_norm_estimate(g, q, eta, beta, K, trials, rng) -> float:
    """Largest ``||pi F||_2 / ||F||_{T^2}`` over random tent fields."""
    w = _pi_weights(g, eta, beta, K)
    best = 0.0
    for _ in range(trials):
        F = TentField(rng.standard_normal((K, g.n)))
        best = max(best, lp_norm(g, pi_synthesis(g, eta, beta, F, w)) / tent_norm2(g, F))
    return best
