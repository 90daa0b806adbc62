import math

import numpy as np
import pytest
from scipy.special import binom

from oracles import binomial_series
from rieszlab.functionals import TentField, lp_transform, tent_A, tent_norm2
from rieszlab.hardy import (
    check_e1_atom,
    check_molecule,
    default_eta,
    molecular_decompose,
    molecule_constant,
    pi_operator_norm_estimate,
    pi_synthesis,
    pipeline_K_max,
    reconstruct_tent,
    reconstruction_defect,
    riesz_hardy_map,
    synthesis_coefficients,
    synthesis_coefficients_exact,
    tent_atomic_decompose,
)
from rieszlab.markov import project_mean_zero, spectral


class TestE1Atoms:
    def test_single_vertex(self, gasket2):
        g, q = gasket2.graph, gasket2.metric
        x = 5
        b = np.zeros(g.n)
        b[x] = 1 / g.measure[x]
        cert = check_e1_atom(g, q, b, x, 1)
        assert cert.valid and cert.k == 1
        assert cert.norm_ratio == pytest.approx(1)
        np.testing.assert_allclose(cert.atom, b - g.transition @ b)

    def test_support_clause(self, gasket2):
        g, q = gasket2.graph, gasket2.metric
        b = np.zeros(g.n)
        b[[0, 9]] = 1e-3
        cert = check_e1_atom(g, q, b, 0, 1)
        assert not cert.valid and cert.clause == "support"

    def test_norm_clause(self, gasket2):
        g, q = gasket2.graph, gasket2.metric
        b = np.zeros(g.n)
        b[3] = 2 / g.measure[3]
        cert = check_e1_atom(g, q, b, 3, 0.7)
        assert not cert.valid and cert.clause == "norm" and cert.k == 1

    def test_atom_is_mean_zero(self, gasket3, rng):
        g, q = gasket3.graph, gasket3.metric
        inside = q.row(g, 10) < 6
        b = np.where(inside, rng.normal(size=g.n), 0.0)
        b /= math.sqrt(g.measure @ b**2) * math.sqrt(g.measure[inside].sum())
        cert = check_e1_atom(g, q, b, 10, 6)
        assert cert.valid
        assert abs(g.measure @ cert.atom) < 1e-13


class TestSynthesisCoefficients:
    def test_eta_two(self):
        np.testing.assert_array_equal(synthesis_coefficients(2, 6), np.arange(1, 7))

    @pytest.mark.parametrize("eta", [1, 3, 5, 8])
    def test_generating_function(self, eta):
        c = synthesis_coefficients(eta, 30)
        np.testing.assert_allclose(c, binomial_series(-eta, 30), rtol=1e-13)
        np.testing.assert_allclose(c, synthesis_coefficients_exact(eta, 30), rtol=1e-13)
        l = np.arange(1, 31)
        np.testing.assert_allclose(c, binom(l + eta - 2, eta - 1), rtol=1e-13)

    def test_defect(self):
        assert reconstruction_defect(0.0, 3, 1) == pytest.approx(0.0)
        d = [reconstruction_defect(z, 3, 40) for z in (0.1, 0.5, 0.8, 0.9)]
        assert all(a <= b for a, b in zip(d, d[1:]))

    def test_pipeline_K(self, gasket2):
        g = gasket2.graph
        K = pipeline_K_max(g, 4, 1e-6)
        z = spectral(g).radius ** 2
        assert reconstruction_defect(z, 4, K) <= 1e-7
        assert reconstruction_defect(z, 4, K - 1) > 1e-7

    def test_default_eta(self):
        assert default_eta(1.0, 1.0, 0.5) == 4
        assert default_eta(2.0, 0.5, 1.0) == 5

    def test_pi_inverts_transform(self, gasket2, rng):
        g = gasket2.graph
        f = project_mean_zero(g, rng.normal(size=g.n))
        for eta, beta in ((4, 1.0), (5, 0.5), (6, 2.0)):
            K = pipeline_K_max(g, eta, 1e-10)
            F = lp_transform(g, beta, f, K)
            np.testing.assert_allclose(pi_synthesis(g, eta, beta, F), f, atol=1e-9)

    def test_pi_bounded(self, gasket2, rng):
        est = pi_operator_norm_estimate(gasket2.graph, gasket2.metric, 4, 1.0, 30, 5, rng)
        assert 0 < est < np.inf

    def test_eta_must_exceed_beta(self, gasket2):
        with pytest.raises(ValueError):
            pi_synthesis(gasket2.graph, 1, 1.0, TentField.zeros(3, gasket2.graph.n))


class TestTentDecomposition:
    def test_zero_field(self, gasket2):
        dec = tent_atomic_decompose(gasket2.graph, gasket2.metric, TentField.zeros(4, gasket2.graph.n))
        assert len(dec) == 0 and dec.residual == 0

    @pytest.mark.parametrize("seed", range(4))
    def test_round_trip(self, gasket3, seed):
        g, q = gasket3.graph, gasket3.metric
        r = np.random.default_rng(seed)
        F = TentField(r.normal(size=(10, g.n)) * (r.uniform(size=(10, g.n)) < 0.3))
        dec = tent_atomic_decompose(g, q, F)
        assert dec.residual < 1e-12
        recon = reconstruct_tent(g, dec.coefficients, dec.pieces, F.K_max)
        np.testing.assert_allclose(recon.values, F.values, atol=1e-12)
        for atom in dec.pieces:
            cert = atom.certificate(g)
            assert cert["valid"], cert
            assert cert["size_ratio"] == pytest.approx(1)
            assert atom.radius >= 1

    def test_single_point(self, gasket2):
        g, q = gasket2.graph, gasket2.metric
        F = TentField.zeros(3, g.n)
        F.values[0, 7] = 1.0
        dec = tent_atomic_decompose(g, q, F)
        assert len(dec) == 1
        a = dec.pieces[0]
        assert a.members.tolist() == [7]
        assert dec.coefficients[0] == pytest.approx(math.sqrt(g.measure[7]) * tent_norm2(g, F))

    def test_coefficient_ratio(self, gasket3):
        g, q = gasket3.graph, gasket3.metric
        F = TentField(np.random.default_rng(1).normal(size=(6, g.n)))
        dec = tent_atomic_decompose(g, q, F)
        assert dec.source_norm == pytest.approx(g.measure @ tent_A(g, q, F))
        assert 0.5 < dec.ratio < 20


class TestMolecules:
    def test_function_pipeline(self, gasket2, rng):
        g, q = gasket2.graph, gasket2.metric
        f = project_mean_zero(g, rng.normal(size=g.n))
        dec = molecular_decompose(g, q, f, beta=1.0, eps=1.0, tol=1e-6)
        assert dec.residual < 1e-6
        for mol in dec.pieces:
            chk = check_molecule(mol)
            assert chk.valid and chk.margin == pytest.approx(1)
            # molecules integrate to zero
            assert abs(g.measure @ mol.a) < 1e-10 * max(1, np.abs(mol.a).max())

    def test_form_pipeline(self, gasket2, rng):
        g, q = gasket2.graph, gasket2.metric
        f = project_mean_zero(g, rng.normal(size=g.n))
        dec = riesz_hardy_map(g, q, f, tol=1e-6)
        assert dec.residual < 1e-6
        assert all(check_molecule(m).valid for m in dec.pieces)
        assert all(m.kind == "form" and m.a.is_antisymmetric() for m in dec.pieces)

    def test_projects_mean(self, gasket2):
        g, q = gasket2.graph, gasket2.metric
        f = np.arange(g.n, dtype=float)
        with pytest.warns(UserWarning, match="mean-zero"):
            dec = molecular_decompose(g, q, f, tol=1e-6)
        assert "projected_mean" in dec.info

    def test_zero_input(self, gasket2):
        dec = molecular_decompose(gasket2.graph, gasket2.metric, np.zeros(gasket2.graph.n))
        assert len(dec) == 0

    def test_constant_scaling(self, gasket2, rng):
        g, q = gasket2.graph, gasket2.metric
        b = rng.normal(size=g.n)
        C = molecule_constant(g, q, b, 0, 2.0, 1.0)
        assert molecule_constant(g, q, b / C, 0, 2.0, 1.0) == pytest.approx(1)

    def test_bad_eta(self, gasket2, rng):
        f = project_mean_zero(gasket2.graph, rng.normal(size=gasket2.graph.n))
        with pytest.raises(ValueError):
            molecular_decompose(gasket2.graph, gasket2.metric, f, beta=2, eta=2)
