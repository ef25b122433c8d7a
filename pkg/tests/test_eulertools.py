import math
import random

import pytest

from hybridsim import graphcore as gc
from hybridsim.eulertools import (
    ArboricityError,
    MinorRoundSpec,
    OddDegreeError,
    VirtualNodeSet,
    check_decomposition,
    eulerian_orientation,
    forest_decomposition,
    minor_round,
    minor_round_reference,
    network_decomposition,
    orient_cycles,
)
from hybridsim.hybridnet import HybridNetwork, ModelConfig


def _net(g, seed=0):
    cap = max(gc.log2ceil(g.n), g.max_degree(), 1)
    return HybridNetwork(g, ModelConfig.for_graph(g, cap=cap), seed)


# minor aggregation


def test_all_bottom_gives_singletons():
    g = gc.grid(2, 4)
    res = minor_round(_net(g), MinorRoundSpec(set(), list(range(16)), "min", "sum"))
    assert res.y == list(range(16))
    assert len(set(res.supernode)) == 16


def test_all_top_gives_one_supernode():
    g = gc.grid(2, 4)
    x = [(7 * v) % 16 for v in range(16)]
    res = minor_round(_net(g), MinorRoundSpec(set(g.edges()), x, "max", "sum"))
    assert set(res.y) == {15}
    assert len(set(res.supernode)) == 1
    assert set(res.agg) == {None}


def test_random_flags_grid8_match_reference():
    g = gc.grid(2, 8)
    rng = random.Random(1)
    for trial in range(5):
        flags = {e for e in g.edges() if rng.random() < 0.5}
        spec = MinorRoundSpec(flags, [rng.randrange(50) for _ in range(g.n)], "min", "sum")
        res = minor_round(_net(g, trial), spec)
        assert (res.supernode, res.y, res.agg) == minor_round_reference(g, spec)


def test_custom_proposal():
    g = gc.path(6)
    spec = MinorRoundSpec({(0, 1), (1, 2)}, [5, 1, 4, 2, 8, 3], "min", "max", propose=lambda u, v, yu, yv: (yu + yv, yu - yv))
    res = minor_round(_net(g), spec)
    assert (res.supernode, res.y, res.agg) == minor_round_reference(g, spec)


def test_oversized_value():
    g = gc.path(4)
    with pytest.raises(ValueError):
        minor_round(_net(g), MinorRoundSpec(set(), [1 << 200, 0, 0, 0]))


# forest decomposition


def test_tree_and_cycle():
    fo = forest_decomposition(gc.random_tree(80, 1), 1)
    assert fo.max_outdegree() <= 4
    assert forest_decomposition(gc.cycle(30), 1).max_outdegree() <= 2


def _three_trees(n, seed):
    edges = set()
    for t in range(3):
        for u, v in gc.random_tree(n, 3 * seed + t).edges():
            edges.add((min(u, v), max(u, v)))
    return gc.Graph(n, sorted(edges))


def test_sparse_graphs():
    for s in range(10):
        n = 100
        g = _three_trees(n, s)
        assert g.m <= 3 * n
        fo = forest_decomposition(g, 3)
        assert fo.max_outdegree() <= 4 * 3
        assert fo.stats["layers"] <= gc.log2ceil(n) + 1


def test_arboricity_witness():
    with pytest.raises(ArboricityError) as err:
        forest_decomposition(gc.complete(20), 1)
    assert err.value.witness["arboricity_at_least"] > 1


# cycle orientation


def test_triangle():
    o = orient_cycles([(0, 1), (1, 2), (2, 0)])
    assert all(d == 1 for d in o.indegree().values())
    assert all(d == 1 for d in o.outdegree().values())


def test_two_cycles():
    edges = [(i, (i + 1) % 4) for i in range(4)] + [(10 + i, 10 + (i + 1) % 6) for i in range(6)]
    o = orient_cycles(edges)
    assert o.is_eulerian()


def test_doubled_edge():
    o = orient_cycles([(0, 1), (0, 1)])
    assert sorted(o.arcs()) == [(0, 1), (1, 0)]


def test_self_loop():
    o = orient_cycles([("a", "a")])
    assert o.is_eulerian()


def test_long_cycle_shrinks():
    n = 2000
    perm = list(range(n))
    random.Random(4).shuffle(perm)
    edges = [(perm[i], perm[(i + 1) % n]) for i in range(n)]
    o = orient_cycles(edges)
    assert o.is_eulerian()
    assert o.stats["max_shrink"] <= 2 / 3
    assert o.stats["iterations"] <= 2 * math.ceil(math.log2(n))


def test_degree_violation():
    with pytest.raises(ValueError):
        orient_cycles([(0, 1), (1, 2)])


# network decomposition


def test_clique_single_cluster():
    nd = network_decomposition(gc.complete(12), 2)
    assert nd.colors == 1 and len(nd.centers) == 1


def test_path64_separation():
    g = gc.path(64)
    nd = network_decomposition(g, 2, seed=1)
    rep = check_decomposition(g, nd)
    assert rep["within_bound"]
    assert rep["min_same_color_gap"] > 2


def test_color_count_random_graphs():
    for s in range(20):
        g = gc.cycle(100 + 20 * s) if s % 2 else gc.random_tree(300, s)
        nd = network_decomposition(g, 2, seed=s)
        rep = check_decomposition(g, nd)
        assert nd.colors <= 4 * gc.log2ceil(g.n)
        assert rep["separated"] and rep["within_bound"]


# Eulerian orientation


def test_even_cycle():
    g = gc.cycle(10)
    o = eulerian_orientation(_net(g), g.edges())
    assert o.is_eulerian()


def test_k5():
    g = gc.complete(5)
    o = eulerian_orientation(_net(g), g.edges())
    assert all(d == 2 for d in o.indegree().values())
    assert all(d == 2 for d in o.outdegree().values())


def _grid6_ring():
    ring = [(i, i + 1) for i in range(5)] + [(30 + i, 31 + i) for i in range(5)]
    ring += [(6 * i, 6 * i + 6) for i in range(5)] + [(5 + 6 * i, 11 + 6 * i) for i in range(5)]
    return ring


def test_grid6_with_virtual_nodes():
    g = gc.grid(2, 6)
    vs = VirtualNodeSet(2, [(a, r) for a in (0, 1) for r in (7, 8, 14, 21)])
    o = eulerian_orientation(_net(g), _grid6_ring(), vs)
    assert o.is_eulerian()
    deg_in = o.indegree()
    assert deg_in[("v", 0)] == 2 and deg_in[("v", 1)] == 2


def test_residual_virtual_nodes():
    g = gc.grid(2, 6)
    vs = VirtualNodeSet(2, [(0, 7), (0, 8), (0, 14), (1, 7), (1, 8), (1, 14)], [(0, 1)])
    o = eulerian_orientation(_net(g), _grid6_ring(), vs)
    assert o.is_eulerian()
    assert o.stats["relay_rounds"] > 0


def test_long_cycle_uses_many_colors():
    g = gc.cycle(200)
    o = eulerian_orientation(_net(g), g.edges())
    assert o.is_eulerian()
    assert o.stats["colors"] > 1
    assert o.stats["forest_witness"]


def test_odd_degree_named():
    g = gc.path(5)
    with pytest.raises(OddDegreeError, match="node 0"):
        eulerian_orientation(_net(g), [(0, 1)])


def test_virtual_count_limit():
    g = gc.path(4)
    with pytest.raises(ValueError):
        eulerian_orientation(_net(g), [], VirtualNodeSet(50))


def test_edge_list_export():
    o = orient_cycles([(0, 1), (1, 2), (2, 0)])
    lines = o.to_edge_list().splitlines()
    assert lines[0] == "tail,head" and len(lines) == 4
