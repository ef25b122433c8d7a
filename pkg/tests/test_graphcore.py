import math
import unittest

import numpy as np

from hybridsim import graphcore as gc


class GeneratorTests(unittest.TestCase):
    def test_grid_structure(self):
        g = gc.generate("grid", {"d": 2, "m": 4})
        self.assertEqual(g.n, 16)
        self.assertEqual(g.degree(0), 2)
        self.assertEqual(g.degree(5), 4)

    def test_path_diameter_and_endpoint_ball(self):
        g = gc.path(5)
        self.assertEqual(gc.diameter(g), 4)
        self.assertEqual(len(gc.ball(g, 0, 2)), 3)

    def test_grid_corner_ball_is_binomial(self):
        # corner ball of radius r in a 2-d grid holds C(r+2, 2) nodes
        self.assertEqual(len(gc.ball(gc.grid(2, 10), 0, 3)), math.comb(5, 2))
        self.assertEqual(len(gc.ball(gc.grid(2, 20), 0, 5)), math.comb(7, 2))

    def test_zero_radius_ball(self):
        g = gc.erdos_renyi(30, 0.2, seed=1)
        for v in range(g.n):
            self.assertEqual(gc.ball(g, v, 0), {v})

    def test_path_endpoint_ball(self):
        self.assertEqual(len(gc.ball(gc.path(100), 0, 7)), 8)

    def test_generators_are_connected_and_deterministic(self):
        for kind, params in [("erdos_renyi", {"n": 60, "p": 0.05}), ("random_tree", {"n": 50})]:
            a = gc.generate(kind, params, seed=4)
            b = gc.generate(kind, params, seed=4)
            self.assertTrue(a.is_connected())
            self.assertEqual(a.edges(), b.edges())

    def test_unknown_kind(self):
        with self.assertRaises(gc.ConfigurationError):
            gc.generate("torus", {"n": 4})

    def test_validation(self):
        with self.assertRaises(gc.ConfigurationError):
            gc.Graph(3, [(0, 1)])
        with self.assertRaises(gc.ConfigurationError):
            gc.Graph(2, [(0, 0)])
        with self.assertRaises(gc.ConfigurationError):
            gc.Graph(2, [(0, 1)], node_ids=[5, 5])

    def test_symmetric_adjacency(self):
        g = gc.erdos_renyi(40, 0.1, seed=2)
        for v in range(g.n):
            for u in g.adjacency[v]:
                self.assertIn(v, g.adjacency[u])

    def test_random_weights_in_range(self):
        g = gc.with_random_weights(gc.grid(2, 5), seed=3)
        self.assertTrue(all(1 <= w <= g.n**3 for w in g.weights.values()))


class DistanceTests(unittest.TestCase):
    def test_path_distances(self):
        t = gc.oracle_distances(gc.path(5), [0])
        self.assertEqual(list(t.dist[0]), [0, 1, 2, 3, 4])

    def test_self_distance_zero(self):
        g = gc.with_random_weights(gc.erdos_renyi(25, 0.2, seed=5), seed=5)
        t = gc.oracle_distances(g, range(g.n))
        self.assertTrue(np.all(np.diag(t.dist) == 0))

    def test_heavy_edge_on_cycle(self):
        g = gc.cycle(6)
        w = {e: 1 for e in g.edges()}
        w[(0, 1)] = 10
        t = gc.oracle_distances(g.with_weights(w), [0])
        self.assertEqual(t.d(0, 1), 5)

    def test_hop_limited(self):
        g = gc.cycle(6)
        w = {e: 1 for e in g.edges()}
        w[(0, 1)] = 10
        t = gc.oracle_distances(g.with_weights(w), [0], hop_limit=2)
        self.assertEqual(t.d_h(0, 1), 10)
        self.assertEqual(t.d_h(0, 4), 2)
        self.assertTrue(math.isinf(t.d_h(0, 3)))

    def test_unknown_source(self):
        with self.assertRaises(KeyError):
            gc.oracle_distances(gc.path(3), [7])


class HardInstanceTests(unittest.TestCase):
    def _check_gap(self, hi):
        t = gc.oracle_distances(hi.graph, [hi.node])
        near = max(t.d(hi.node, u) for u in hi.v1)
        far = min(t.d(hi.node, u) for u in hi.v2)
        return far >= hi.gap * near

    def test_path(self):
        hi = gc.hard_instance(gc.path(64), 8)
        self.assertFalse(hi.degenerate)
        self.assertIn(hi.node, (0, 63))
        self.assertTrue(self._check_gap(hi))

    def test_grid_sizes(self):
        hi = gc.hard_instance(gc.grid(2, 8), 16)
        self.assertFalse(hi.degenerate)
        self.assertGreaterEqual(len(hi.v1), 16)
        self.assertGreaterEqual(len(hi.v2), 16)
        self.assertTrue(self._check_gap(hi))

    def test_max_weight(self):
        for g, k in [(gc.path(64), 8), (gc.grid(2, 8), 16), (gc.cycle(80), 20)]:
            hi = gc.hard_instance(g, k)
            self.assertLessEqual(hi.graph.max_weight(), g.n * hi.gap)

    def test_degenerate(self):
        self.assertTrue(gc.hard_instance(gc.path(10), 9).degenerate)


class IoTests(unittest.TestCase):
    def test_round_trip(self):
        g = gc.with_random_weights(gc.grid(2, 4), seed=1, max_weight=9)
        h = gc.read_graph(gc.write_graph(g))
        self.assertEqual(h.edges(), g.edges())
        self.assertEqual(h.weights, g.weights)


if __name__ == "__main__":
    unittest.main()
