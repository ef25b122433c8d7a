import math

import numpy as np
import pytest

from hybridsim import graphcore as gc
from hybridsim.hybridnet import HybridNetwork
from hybridsim.nq import nq_profile
from hybridsim.routing import (
    ARB_RAND,
    MEMBERSHIP_CONSTANT,
    RAND_ARB,
    RAND_RAND,
    RoutingInstance,
    adaptive_helpers,
    consolidate_sources,
    intermediate_map,
    kl_route,
    load_bound,
    next_prime,
    sample_hash,
)


def test_next_prime():
    assert next_prime(14) == 17
    assert next_prime(17) == 17


def test_hash_uniform_marginal():
    n = 16
    h = sample_hash(1, n, seed=3)
    # a degree-0 polynomial is constant; the family's marginal is uniform over seeds
    counts = np.bincount([sample_hash(1, n, s)(0, 0) for s in range(4000)], minlength=n)
    expected = 4000 / n
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 30.58  # 1% critical value, 15 degrees of freedom
    assert 0 <= h(1, 2) < n


def test_hash_deterministic():
    a, b = sample_hash(4, 100, 9), sample_hash(4, 100, 9)
    assert all(a(i, j) == b(i, j) for i in range(40) for j in range(25))


def test_pairwise_collisions():
    n = 64
    rng = np.random.default_rng(0)
    trials = 4000
    hits = 0
    for s in range(trials):
        h = sample_hash(2, n, s)
        i, j, a, b = (int(x) for x in rng.integers(0, n, 4))
        if (i, j) == (a, b):
            continue
        hits += h(i, j) == h(a, b)
    p = 1 / n
    assert abs(hits / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials) + 1 / trials


def test_helpers_empty():
    net = HybridNetwork(gc.path(16))
    a = adaptive_helpers(net, [], 4)
    assert a.helpers == {}


def test_helpers_grid():
    g = gc.grid(2, 16)
    net = HybridNetwork(g)
    k = 64
    nq = nq_profile(g, k).value
    rng = np.random.default_rng(1)
    W = [int(v) for v in np.flatnonzero(rng.random(g.n) < nq / k)]
    a = adaptive_helpers(net, W, k, join_prob=nq / k)
    assert a.certified(g.n)
    hops = gc.hop_matrix(g)
    for w, hs in a.helpers.items():
        assert len(hs) >= k / nq
        assert max(hops[w, u] for u in hs) <= a.hop_bound
    assert max(a.membership().values()) <= MEMBERSHIP_CONSTANT * gc.log2ceil(g.n)


def test_tiny_cluster_drafts_everyone():
    g = gc.path(32)
    net = HybridNetwork(g)
    a = adaptive_helpers(net, [0], 32)
    assert len(a.helpers[0]) >= 32 / nq_profile(g, 32).value


def test_intermediate_map_single_pair():
    net = HybridNetwork(gc.path(16))
    h, cert = intermediate_map(net, 1, 1, [0], [5])
    assert cert["max_load"] == 1
    assert 0 <= h(3, 7) < 16


def test_intermediate_load_within_bound():
    n = 256
    good = 0
    for seed in range(20):
        net = HybridNetwork(gc.grid(2, 16), seed=seed)
        S = list(range(32))
        T = list(range(100, 108))
        _, cert = intermediate_map(net, 32, 8, S, T)
        good += cert["max_load"] <= cert["bound"]
        assert cert["bound"] == load_bound(32, 8, n)
    assert good >= 19


def test_consolidation_identity_for_few_sources():
    g = gc.path(64)
    net = HybridNetwork(g)
    inst = RoutingInstance.sample(64, RAND_RAND, 4, 4, seed=1)
    cons = consolidate_sources(net, inst)
    assert len(cons.sub_instances) == 1


@pytest.mark.slow
def test_consolidation_bounds_path1024():
    g = gc.path(1024)
    net = HybridNetwork(g)
    inst = RoutingInstance.sample(1024, RAND_RAND, 512, 2, seed=2)
    cons = consolidate_sources(net, inst)
    for sub in cons.sub_instances:
        assert len(sub.sources) <= cons.bound and len(sub.targets) <= cons.bound


def test_consolidation_conserves_messages():
    g = gc.grid(2, 16)
    net = HybridNetwork(g, seed=4)
    inst = RoutingInstance.sample(256, RAND_RAND, 96, 3, seed=4)
    res = kl_route(net, inst, seed=4)
    assert "consolidation" in res.stats
    assert res.exact(inst)


def test_adjacent_pair():
    net = HybridNetwork(gc.path(8))
    inst = RoutingInstance([3], [4], ARB_RAND, 1, 1, {(3, 4): 5})
    res = kl_route(net, inst)
    assert res.exact(inst)


def test_case1_path256():
    g = gc.path(256)
    net = HybridNetwork(g, seed=1)
    inst = RoutingInstance.sample(256, ARB_RAND, 64, 4, seed=1)
    res = kl_route(net, inst, seed=1)
    assert res.exact(inst)


def test_case2_small():
    g = gc.grid(2, 8)
    net = HybridNetwork(g, seed=3)
    inst = RoutingInstance.sample(64, RAND_ARB, 3, 8, seed=3)
    assert kl_route(net, inst, seed=3).exact(inst)


def test_case3_grid16():
    g = gc.grid(2, 16)
    net = HybridNetwork(g, seed=2)
    inst = RoutingInstance.sample(256, RAND_RAND, 16, 16, seed=2)
    res = kl_route(net, inst, seed=2)
    assert res.exact(inst)
    assert not net.transcript.violations
    assert max(net.transcript.max_recv) <= net.cfg.global_recv_cap
