import numpy as np
import pytest

from hybridsim import graphcore as gc
from hybridsim.dissemination import (
    TokenSet,
    allocate_indices,
    disseminate_via_aggregate,
    flood_disseminate,
    k_aggregate,
    k_disseminate,
    load_balance,
)
from hybridsim.hybridnet import HybridNetwork
from hybridsim.nq import nq_profile


def _items(n, count):
    return {0: [(i, i) for i in range(count)]}


def test_load_balance_ceiling():
    net = HybridNetwork(gc.path(4))
    out = load_balance(net, [0, 1, 2, 3], {0: list(range(6)), 2: list(range(6, 10))}, 3)
    assert max(len(x) for x in out.values()) == 3
    assert sorted(x for xs in out.values() for x in xs) == list(range(10))
    assert net.round == 6


def test_load_balance_empty():
    net = HybridNetwork(gc.path(4))
    out = load_balance(net, [0, 1, 2, 3], {}, 3)
    assert all(len(x) == 0 for x in out.values())


def test_load_balance_one_each():
    net = HybridNetwork(gc.path(5))
    out = load_balance(net, range(5), {4: list("abcde")}, 4)
    assert all(len(x) == 1 for x in out.values())
    assert sorted(x for xs in out.values() for x in xs) == list("abcde")


def test_single_token():
    g = gc.grid(2, 8)
    net = HybridNetwork(g)
    ts = TokenSet.one_node(net.ids, 1, node=17)
    res = k_disseminate(net, ts)
    assert res.complete(ts.all_items())
    assert res.rounds <= 64 * gc.log2ceil(g.n) ** 3


def test_path64_sixteen_at_endpoint():
    g = gc.path(64)
    net = HybridNetwork(g)
    ts = TokenSet.one_node(net.ids, 16, node=0)
    res = k_disseminate(net, ts)
    assert res.complete(ts.all_items())
    assert res.nq == nq_profile(g, 16).value == 4
    assert not net.transcript.violations


@pytest.mark.slow
def test_grid16_k_equals_n():
    g = gc.grid(2, 16)
    net = HybridNetwork(g)
    ts = TokenSet.uniform(net.ids, 256, seed=3)
    res = k_disseminate(net, ts)
    assert res.complete(ts.all_items())


def test_more_tokens_than_nodes():
    g = gc.grid(2, 6)
    net = HybridNetwork(g)
    ts = TokenSet.uniform(net.ids, 80, seed=1)
    assert k_disseminate(net, ts).complete(ts.all_items())


def test_deterministic():
    g = gc.cycle(40)
    runs = []
    for _ in range(2):
        net = HybridNetwork(g, seed=2)
        ts = TokenSet.uniform(net.ids, 10, seed=2)
        k_disseminate(net, ts)
        runs.append(net.transcript.to_json())
    assert runs[0] == runs[1]


def test_aggregate_min_ids():
    g = gc.path(20)
    net = HybridNetwork(g)
    vals = [[v + i for i in range(5)] for v in range(g.n)]
    res = k_aggregate(net, vals, min)
    assert all(o == tuple(range(5)) for o in res.outputs)


def test_aggregate_sum_of_ones():
    g = gc.grid(2, 5)
    net = HybridNetwork(g)
    res = k_aggregate(net, [[1] * 4 for _ in range(g.n)], lambda a, b: a + b)
    assert all(o == (25,) * 4 for o in res.outputs)


def test_aggregate_max_cycle48():
    g = gc.cycle(48)
    rng = np.random.default_rng(4)
    vals = rng.integers(0, 64, size=(48, 12))
    res = k_aggregate(HybridNetwork(g), [list(map(int, r)) for r in vals], max)
    want = tuple(int(x) for x in vals.max(axis=0))
    assert all(o == want for o in res.outputs)


def test_allocation_single_holder():
    net = HybridNetwork(gc.path(16))
    ts = TokenSet.one_node(net.ids, 6, node=3)
    index, _ = allocate_indices(net, ts)
    assert sorted(index.values()) == list(range(6))


def test_allocation_bijection():
    net = HybridNetwork(gc.grid(2, 5))
    ts = TokenSet.from_counts(net.ids, [1] * 25)
    index, _ = allocate_indices(net, ts)
    assert sorted(index.values()) == list(range(25))


def test_via_aggregate_equals_direct():
    g = gc.path(32)
    ts = TokenSet.uniform(tuple(range(32)), 8, seed=5)
    a = k_disseminate(HybridNetwork(g), ts)
    b = disseminate_via_aggregate(HybridNetwork(g), ts)
    assert a.outputs == b.outputs


def test_flood_baseline_takes_diameter():
    g = gc.path(16)
    net = HybridNetwork(g)
    ts = TokenSet.uniform(net.ids, 4)
    res = flood_disseminate(net, ts)
    assert res.rounds == 15
    assert res.complete(ts.all_items())


def test_token_validation():
    with pytest.raises(ValueError):
        TokenSet({(0, 0): 1}, {0: [(0, 0)], 1: [(0, 0)]})
