import numpy as np
import pytest

from oracles import binomial_series, dense_P, eig_apply, kernel
from rieszlab.builders import BuilderSpec, build
from rieszlab.markov import (
    SeriesDivergenceError,
    TooLargeError,
    analyticity_constant,
    binomial_coefficient,
    binomial_coefficients,
    kernel_diagonal,
    kernel_rows,
    laplacian_power_apply,
    markov,
    mean_zero_radius,
    project_mean_zero,
    resolvent_coefficients,
    series_apply,
    spectral,
    spectral_apply,
    spectral_matrix,
    time_difference,
    truncation_length,
)


class TestHandValues:
    def test_lazy_k2(self, k2):
        kf = kernel_rows(k2.graph, 0, 1)
        assert kf.at(1)[1] == 0.25
        assert kf.at(0)[0] == 0.5

    def test_lazy_cycle_return(self, c4):
        assert kernel_diagonal(c4.graph, 0, [2])[0] == pytest.approx(3 / 32, abs=1e-16)

    def test_k2_eigenfunction(self, k2):
        f = np.array([1.0, -1.0])
        np.testing.assert_array_equal(laplacian_power_apply(k2.graph, f, 1, 2), 0)
        np.testing.assert_array_equal(laplacian_power_apply(k2.graph, f, 1, 1), f)


class TestKernel:
    def test_against_matrix_power(self, weighted_random):
        g, _ = weighted_random
        kf = kernel_rows(g, [0, 4, 11], 9)
        for k in (0, 1, 5, 9):
            np.testing.assert_allclose(kf.at(k, 1), kernel(g, k)[4], rtol=1e-12)

    def test_symmetry(self, gasket3):
        g = gasket3.graph
        kf = kernel_rows(g, np.arange(g.n), 12, steps=[12])
        K = kf.values[0]
        np.testing.assert_allclose(K, K.T, rtol=1e-12, atol=0)

    def test_mass(self, gasket3):
        kf = kernel_rows(gasket3.graph, [0, 7], 30)
        assert kf.mass_defect(gasket3.graph.measure) < 1e-13

    def test_selected_steps(self, gasket2):
        full = kernel_rows(gasket2.graph, 3, 8)
        part = kernel_rows(gasket2.graph, 3, 8, steps=[2, 8])
        np.testing.assert_array_equal(part.values[1], full.values[8])
        assert part.steps == 1

    def test_negative_K(self, k2):
        with pytest.raises(ValueError):
            kernel_rows(k2.graph, 0, -1)

    def test_operator_and_adjoint(self, weighted_random, rng):
        g, _ = weighted_random
        M = markov(g)
        f, r = rng.normal(size=g.n), rng.normal(size=g.n)
        np.testing.assert_allclose(M(f), dense_P(g) @ f)
        assert r @ M(f) == pytest.approx(M.adjoint(r) @ f)
        np.testing.assert_allclose(M.power(f, 3), np.linalg.matrix_power(dense_P(g), 3) @ f)

    def test_time_difference(self, gasket2, rng):
        g = gasket2.graph
        f = rng.normal(size=g.n)
        P = dense_P(g)
        expect = (P - np.eye(g.n)) @ np.linalg.matrix_power(P, 4) @ f
        np.testing.assert_allclose(time_difference(g, f, 5), expect, atol=1e-13)


class TestSpectral:
    def test_eigenvalues(self, weighted_random):
        g, _ = weighted_random
        lam = spectral(g).lam
        ref = np.sort(np.linalg.eigvals(dense_P(g)).real)[::-1]
        np.testing.assert_allclose(lam, ref, atol=1e-12)
        assert lam[0] == 1.0

    def test_lazy_spectrum_nonnegative(self, gasket3):
        assert spectral(gasket3.graph).lam.min() >= -1e-12

    def test_apply_matches_oracle(self, weighted_random, rng):
        g, _ = weighted_random
        f = rng.normal(size=g.n)
        phi = lambda lam: np.exp(-3 * (1 - lam))  # noqa: E731
        np.testing.assert_allclose(spectral_apply(g, phi, f), eig_apply(g, phi, f), atol=1e-12)

    def test_apply_columns(self, gasket2, rng):
        g = gasket2.graph
        F = rng.normal(size=(g.n, 3))
        out = spectral_apply(g, lambda lam: lam**2, F)
        P = dense_P(g)
        np.testing.assert_allclose(out, P @ P @ F, atol=1e-12)

    def test_matrix(self, gasket2):
        g = gasket2.graph
        np.testing.assert_allclose(spectral_matrix(g, lambda lam: lam), dense_P(g), atol=1e-13)

    def test_self_adjoint(self, weighted_random, rng):
        g, _ = weighted_random
        m = g.measure
        f, h = rng.normal(size=g.n), rng.normal(size=g.n)
        P = dense_P(g)
        assert m @ (P @ f * h) == pytest.approx(m @ (f * (P @ h)), rel=1e-12)

    def test_contraction(self, gasket3, rng):
        g = gasket3.graph
        P = dense_P(g)
        f = rng.normal(size=g.n)
        for p in (1, 1.5, 2, 4):
            lhs = (g.measure @ np.abs(P @ f) ** p) ** (1 / p)
            rhs = (g.measure @ np.abs(f) ** p) ** (1 / p)
            assert lhs <= rhs * (1 + 1e-12)

    def test_radius(self, c4):
        # lazy 4-cycle: lam = 1/2 + cos(pi j/2)/2 gives {1, 1/2, 0, 1/2}
        assert spectral(c4.graph).radius == pytest.approx(0.5)
        assert mean_zero_radius(c4.graph) == pytest.approx(0.5)

    def test_radius_sparse_path(self, monkeypatch):
        from rieszlab import markov as mk

        g = build(BuilderSpec.cycle(30)).graph
        dense = mean_zero_radius(g)
        monkeypatch.setattr(mk, "SPECTRAL_LIMIT", 10)
        assert mean_zero_radius(g) == pytest.approx(dense, rel=1e-8)

    def test_too_large(self, monkeypatch):
        from rieszlab import markov as mk

        monkeypatch.setattr(mk, "SPECTRAL_LIMIT", 3)
        with pytest.raises(TooLargeError):
            spectral(build(BuilderSpec.path(5)).graph)

    def test_analyticity_bounded(self, gasket3):
        c = analyticity_constant(gasket3.graph, [1, 10, 100, 1000])
        assert c.max() < 1


class TestSeries:
    def test_binomial(self):
        np.testing.assert_allclose(binomial_coefficients(-0.5, 4), [1, 0.5, 0.375, 0.3125])
        for gamma in (-0.5, 0.5, -1.3, 2.0):
            np.testing.assert_allclose(binomial_coefficients(gamma, 12), binomial_series(gamma, 12))
        c = binomial_coefficient(0.5)
        assert c(3) == pytest.approx(binomial_series(0.5, 4)[3])

    def test_resolvent_term_count(self, gasket2, rng):
        # c_k = 2^{-k-1}, tail after k terms = 2^{-k}; first below 1e-8 at k = 27
        res = series_apply(gasket2.graph, resolvent_coefficients(1.0), rng.normal(size=gasket2.graph.n))
        assert res.terms == 27
        assert res.tail_bound <= 1e-8

    @pytest.mark.parametrize("s", [0.1, 1.0, 10.0])
    def test_resolvent_matches_spectral(self, weighted_random, rng, s):
        g, _ = weighted_random
        f = rng.normal(size=g.n)
        res = series_apply(g, resolvent_coefficients(s), f, tail_tol=1e-12)
        ref = eig_apply(g, lambda lam: 1 / (1 + s * (1 - lam)), f)
        np.testing.assert_allclose(res.value, ref, atol=1e-11 * np.linalg.norm(f))

    def test_finite_sequence_is_exact(self, gasket2, rng):
        g = gasket2.graph
        f = rng.normal(size=g.n)
        res = series_apply(g, [1.0, -1.0], f)
        np.testing.assert_allclose(res.value, f - dense_P(g) @ f, atol=1e-14)
        assert res.tail_bound == 0

    def test_divergence(self, gasket2):
        with pytest.raises(SeriesDivergenceError):
            series_apply(gasket2.graph, lambda k: 1.0, np.ones(gasket2.graph.n), max_terms=50)

    def test_mean_zero(self, gasket2, rng):
        g = gasket2.graph
        f = project_mean_zero(g, rng.normal(size=g.n))
        assert abs(g.measure @ f) < 1e-12

    def test_truncation_length(self):
        assert truncation_length(1e-8, 0.5) == 27
        assert truncation_length(1e-3, 0) == 1
        with pytest.raises(ValueError):
            truncation_length(1e-3, 1.0)
