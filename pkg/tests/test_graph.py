import math

import numpy as np
import pytest
import scipy.sparse as sp

from oracles import bfs_distances
from rieszlab.builders import BuilderSpec, build
from rieszlab.graph import (
    QuasiMetric,
    WeightedGraph,
    annulus,
    ball,
    distance_to_set,
    doubling_scan,
    graph_distance,
    rho,
    safe_zone,
    set_distance,
    volume,
    volume_table,
    volumes,
)


class TestWeightedGraph:
    def test_measure_and_loops(self, weighted_random):
        g, _ = weighted_random
        w = g.weights.toarray()
        np.testing.assert_allclose(g.measure, w.sum(axis=1))
        np.testing.assert_allclose(g.loops, np.diag(w))

    def test_rejects_asymmetric(self):
        w = sp.csr_matrix(np.array([[1.0, 2.0], [1.0, 1.0]]))
        with pytest.raises(ValueError, match="symmetric"):
            WeightedGraph(w)

    def test_rejects_negative(self):
        w = sp.csr_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        with pytest.raises(ValueError, match="positive"):
            WeightedGraph(w)

    def test_rejects_disconnected(self):
        with pytest.raises(ValueError, match="connected"):
            WeightedGraph.from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])

    def test_rejects_degree_above_bound(self):
        with pytest.raises(ValueError, match="exceeds"):
            WeightedGraph.from_edges(3, [(0, 1, 1.0), (0, 2, 1.0)], max_degree=1)

    def test_isolated_vertex_has_no_measure(self):
        with pytest.raises(ValueError):
            WeightedGraph(sp.csr_matrix((2, 2)))

    def test_edges_and_counts(self, k2):
        g = k2.graph
        assert g.edge_count == 1
        assert g.edges() == [(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]
        assert g.adjacency(0) == [(0, 1.0), (1, 1.0)]

    def test_transition_is_stochastic(self, gasket3):
        P = gasket3.graph.transition
        np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0, atol=1e-15)

    def test_boundary_of_gasket_is_the_corners(self, gasket3):
        from rieszlab.builders import corners

        assert sorted(gasket3.graph.boundary.tolist()) == sorted(corners(3))


class TestDistances:
    def test_k2(self, k2):
        assert graph_distance(k2.graph, 0, 1) == 1

    def test_identity(self, gasket2):
        assert all(graph_distance(gasket2.graph, x, x) == 0 for x in range(gasket2.graph.n))

    def test_cycle_antipode(self, c4):
        assert graph_distance(c4.graph, 0, 2) == 2

    def test_against_bfs_oracle(self, weighted_random, gasket3):
        for g in (weighted_random[0], gasket3.graph):
            np.testing.assert_array_equal(g.distance_matrix(), bfs_distances(g))


class TestQuasiMetric:
    def test_power(self):
        g = build(BuilderSpec.path(5)).graph
        q = QuasiMetric.constant(2)
        assert rho(q, g, 0, 3) == 9

    def test_beta_one_is_distance(self, gasket2):
        q = QuasiMetric.constant(1)
        np.testing.assert_array_equal(q.matrix(gasket2.graph), gasket2.graph.distance_matrix())

    def test_beta_below_one_rejected(self):
        with pytest.raises(ValueError):
            QuasiMetric.constant(0.5)

    def test_product_takes_max(self):
        # path with beta 2 at distance 2, gasket with beta log2(5) at distance 1
        b1 = build(BuilderSpec.path(3))
        b2 = build(BuilderSpec.sierpinski(0))
        q = QuasiMetric.product(b1.graph, b1.metric, b2.graph, b2.metric)
        g = build(BuilderSpec.free_product(BuilderSpec.path(3), BuilderSpec.sierpinski(0))).graph
        x = 0 * 3 + 0
        y = 2 * 3 + 1
        assert q(g, x, y) == 4.0
        assert q.bound == pytest.approx(math.log2(5))

    def test_product_distance_is_max_of_factors(self):
        spec = BuilderSpec.free_product(BuilderSpec.path(3), BuilderSpec.cycle(4))
        b = build(spec)
        d = bfs_distances(b.graph)
        d1 = bfs_distances(build(BuilderSpec.path(3)).graph)
        d2 = bfs_distances(build(BuilderSpec.cycle(4)).graph)
        expect = np.maximum(d1[:, None, :, None], d2[None, :, None, :]).reshape(12, 12)
        np.testing.assert_array_equal(d, expect)

    def test_row_matches_matrix(self, gasket3):
        q = gasket3.metric
        g = gasket3.graph
        np.testing.assert_array_equal(q.row(g, 5), q.matrix(g)[5])


class TestBalls:
    def test_small_radius_is_center(self, gasket3):
        g, q = gasket3.graph, gasket3.metric
        b = ball(q, g, 4, 0.5)
        assert b.members.tolist() == [4]
        assert b.volume == g.measure[4]

    def test_large_radius_is_everything(self, gasket3):
        g, q = gasket3.graph, gasket3.metric
        r = q.matrix(g).max() + 1
        assert volume(q, g, 0, r) == pytest.approx(g.measure.sum())

    def test_unit_loop_cycle_volume(self, c4_unit_loops):
        g, q = c4_unit_loops
        assert volume(q, g, 0, 1.5) == 9.0

    def test_radius_must_be_positive(self, gasket2):
        with pytest.raises(ValueError):
            ball(gasket2.metric, gasket2.graph, 0, 0)

    def test_volumes_vectorized(self, gasket3):
        g, q = gasket3.graph, gasket3.metric
        radii = [0.5, 1, 2.5, 7, 40]
        np.testing.assert_allclose(volumes(q, g, 3, radii), [volume(q, g, 3, r) for r in radii])

    def test_volume_table(self, gasket2):
        g, q = gasket2.graph, gasket2.metric
        V = volume_table(q, g, 6)
        for x in range(g.n):
            for k in range(1, 7):
                assert V[x, k - 1] == pytest.approx(volume(q, g, x, k))


class TestAnnuli:
    def test_beyond_diameter_is_empty(self, gasket3):
        g, q = gasket3.graph, gasket3.metric
        assert annulus(q, g, 0, 1000, 3).size == 0

    def test_j0_covers_small_graph(self, gasket2):
        g, q = gasket2.graph, gasket2.metric
        assert annulus(q, g, 0, 100, 0).size == g.n

    def test_cycle_separation(self, c4_unit_loops):
        g, q = c4_unit_loops
        E = ball(q, g, 0, 1).members
        F = annulus(q, g, 0, 1, 1)
        if F.size:
            assert set_distance(q, g, E, F) >= 2

    def test_annuli_partition(self, gasket4):
        g, q = gasket4.graph, gasket4.metric
        parts = [annulus(q, g, 7, 2, j) for j in range(12)]
        allv = np.concatenate(parts)
        assert len(allv) == len(set(allv.tolist())) == g.n

    def test_negative_j_rejected(self, gasket2):
        with pytest.raises(ValueError):
            annulus(gasket2.metric, gasket2.graph, 0, 1, -1)


class TestSets:
    def test_set_distance_empty(self, gasket2):
        assert set_distance(gasket2.metric, gasket2.graph, [], [1]) == np.inf

    def test_distance_to_set(self, gasket3):
        g, q = gasket3.graph, gasket3.metric
        S = [0, 10]
        expect = np.minimum(q.row(g, 0), q.row(g, 10))
        np.testing.assert_array_equal(distance_to_set(q, g, S), expect)

    def test_safe_zone_margin(self, grid10):
        g, q = grid10.graph, grid10.metric
        safe = safe_zone(q, g, 9)
        assert np.all(distance_to_set(q, g, g.boundary)[safe] >= 9)
        assert 44 in safe and 0 not in safe


class TestDoubling:
    def test_path_ratio_near_two(self):
        b = build(BuilderSpec.path(201, beta=1))
        res = doubling_scan(b.metric, b.graph, [8, 16, 32], [100])
        assert 1.9 <= res["max_ratio"] <= 2.1

    def test_grid_exponent_near_one(self):
        # discrete l1 balls are pre-asymptotic below distance ~4
        b = build(BuilderSpec.lattice(2, 101))
        res = doubling_scan(b.metric, b.graph, [16, 64, 256, 1024], [50 * 101 + 50])
        assert res["exponent"] == pytest.approx(1.0, abs=0.1)

    def test_k2_finite(self, k2):
        res = doubling_scan(k2.metric, k2.graph, [0.5, 1, 2], [0])
        assert np.isfinite(res["max_ratio"])

    def test_empty_sample_rejected(self, k2):
        with pytest.raises(ValueError):
            doubling_scan(k2.metric, k2.graph, [1], [])
