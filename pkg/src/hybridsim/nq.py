"""Neighborhood quality, ruling sets and the weak-diameter clustering.

NQ_k(v) is the smallest radius t ≥ 1 whose ball holds at least k/t nodes,
capped at the diameter; NQ_k(G) is the maximum over all nodes. A graph of
diameter 0 (one node) is treated as having cap 1.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .graphcore import Graph, bfs_hops, diameter, log2ceil
from .hybridnet import HybridNetwork, iter_bits
from .overlay import build_virtual_tree, tree_aggregate_broadcast

__all__ = [
    "NqReport",
    "RulingSet",
    "Clustering",
    "nq_node",
    "nq_profile",
    "nq_graph",
    "ruling_set",
    "ruling_set_in_model",
    "cluster_partition",
    "split_sizes",
]


@dataclass
class NqReport:
    k: int
    per_node: list[int]
    value: int
    diameter: int
    rounds: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "value"])
        for v, x in enumerate(self.per_node):
            w.writerow([v, x])
        return buf.getvalue()


def _first_good(sizes, k, cap):
    """Smallest t in 1..cap with sizes[t]·t >= k, else cap."""
    for t in range(1, cap + 1):
        if sizes[min(t, len(sizes) - 1)] * t >= k:
            return t
    return cap


def nq_node(g: Graph, k: int, v: int) -> int:
    """NQ_k(v) by BFS layer counts."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hops = bfs_hops(g, v)
    ecc = max(hops)
    layer = [0] * (ecc + 1)
    for h in hops:
        layer[h] += 1
    sizes = list(np.cumsum(layer))
    return _first_good(sizes, k, max(1, diameter(g)))


def nq_profile(g: Graph, k: int, chunk: int = 256) -> NqReport:
    """Centralized NQ_k(v) for every node from exact hop distances."""
    if k < 1:
        raise ValueError("k must be >= 1")
    from .graphcore import hop_matrix

    D = diameter(g)
    cap = max(1, D)
    ts = np.arange(1, cap + 1)
    per = np.empty(g.n, dtype=np.int64)
    for i in range(0, g.n, chunk):
        rows = list(range(i, min(g.n, i + chunk)))
        h = hop_matrix(g, rows)
        width = D + 1
        flat = (np.arange(len(rows))[:, None] * width + h).ravel()
        counts = np.bincount(flat, minlength=len(rows) * width).reshape(len(rows), width)
        sizes = counts.cumsum(axis=1)
        sz = sizes[:, np.minimum(ts, D)]
        ok = sz * ts[None, :] >= k
        first = np.where(ok.any(axis=1), ok.argmax(axis=1) + 1, cap)
        per[i : i + len(rows)] = first
    per_node = per.tolist()
    return NqReport(k, per_node, max(per_node), D)


def nq_graph(g: Graph, k: int, mode: str = "oracle", net: HybridNetwork | None = None) -> NqReport:
    """NQ_k for all nodes, centrally (``oracle``) or in-model (``distributed``).

    The distributed version explores t = 1, 2, ... hops by flooding; after
    each step the minimum ball size over all nodes is aggregated on the
    virtual tree, and exploration stops at the first t whose minimum is at
    least k/t, or once no ball grows any more (then t - 1 is the diameter).
    """
    if mode == "oracle":
        return nq_profile(g, k)
    if mode != "distributed":
        raise ValueError(f"unknown mode {mode!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    net = net or HybridNetwork(g)
    start = net.round
    with net.phase("nq"):
        tree = build_virtual_tree(net)
        prev = net.balls(0)
        sizes = [[1] for _ in range(g.n)]
        t = 0
        while True:
            t += 1
            cur = net.flood(t, start=t - 1)
            vals = {}
            for v in range(g.n):
                s = cur[v].bit_count()
                sizes[v].append(s)
                vals[v] = (s, cur[v] == prev[v])
            prev = cur
            agg = tree_aggregate_broadcast(
                net, tree, vals, lambda a, b: (min(a[0], b[0]), a[1] and b[1])
            )[tree.root]
            if agg[1]:
                D = t - 1
                cap = max(1, D)
                per = [_first_good(sizes[v], k, cap) for v in range(g.n)]
                value = cap
                break
            if agg[0] * t >= k:
                D = None
                per = [_first_good(sizes[v], k, t) for v in range(g.n)]
                value = t
                break
    if D is None:
        D = diameter(g)
    return NqReport(k, per, value, D, net.round - start)


# ruling sets


@dataclass
class RulingSet:
    alpha: int
    beta: int
    members: list[int]


def ruling_set(g: Graph, alpha: int) -> RulingSet:
    """Sequential greedy by id: a node joins unless a member is within
    alpha - 1 hops. Domination radius is alpha - 1; the reported beta is
    the bound alpha·⌈log2 n⌉ shared with the in-model construction."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    blocked = [False] * g.n
    members = []
    for v in sorted(range(g.n), key=lambda x: g.node_ids[x]):
        if blocked[v]:
            continue
        members.append(v)
        if alpha > 1:
            for u, d in enumerate(bfs_hops(g, v, limit=alpha - 1)):
                if d >= 0:
                    blocked[u] = True
    beta = 0 if alpha == 1 else alpha * log2ceil(g.n)
    return RulingSet(alpha, beta, sorted(members))


def ruling_set_in_model(net: HybridNetwork, alpha: int, candidates=None) -> RulingSet:
    """Bit-by-bit construction over the id space.

    At level i the candidates sharing all id bits above i form a group; the
    group's survivors with bit i set are dropped when a survivor with bit i
    clear lies within alpha - 1 hops. Each level floods alpha - 1 rounds.
    Result: spacing >= alpha and domination within (alpha - 1)·B hops for
    B id bits, in (alpha - 1)·B rounds.
    """
    n = net.n
    alive = set(range(n)) if candidates is None else set(candidates)
    bits = max(1, max(net.ids).bit_length())
    if alpha <= 1:
        return RulingSet(alpha, 0, sorted(alive))
    with net.phase("ruling_set"):
        for i in range(bits):
            balls = net.flood(alpha - 1)
            zero_mask: dict[int, int] = {}
            for v in alive:
                if not (net.ids[v] >> i) & 1:
                    key = net.ids[v] >> (i + 1)
                    zero_mask[key] = zero_mask.get(key, 0) | (1 << v)
            drop = [
                v
                for v in alive
                if (net.ids[v] >> i) & 1 and balls[v] & zero_mask.get(net.ids[v] >> (i + 1), 0)
            ]
            alive.difference_update(drop)
    return RulingSet(alpha, (alpha - 1) * bits, sorted(alive))


# clustering


@dataclass
class Clustering:
    k: int
    nq: int
    cluster_of: list[int]
    leaders: list[int]
    members: list[list[int]]
    diameter_bound: int
    size_bounds: tuple[float, float]
    rulers: list[int] = field(default_factory=list)
    rounds: int = 0

    @property
    def count(self) -> int:
        return len(self.leaders)

    def leader_of(self, v: int) -> int:
        return self.leaders[self.cluster_of[v]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "cluster", "leader"])
        for v, c in enumerate(self.cluster_of):
            w.writerow([v, c, self.leaders[c]])
        return buf.getvalue()


def split_sizes(s: int, k: int, nq: int) -> list[int]:
    """Chunk sizes for a cluster of s nodes.

    Clusters above ⌊2k/NQ⌋ split into the fewest near-equal chunks that fit
    under that cap; every chunk then holds at least ⌈k/NQ⌉ nodes unless the
    window of admissible integer sizes is empty for s, in which case the
    cluster stays whole (this only happens for s = ⌈2k/NQ⌉ when 2k/NQ is
    fractional).
    """
    hi = (2 * k) // nq
    lo = -(-k // nq)
    if s <= hi or hi < 1:
        return [s]
    q = -(-s // hi)
    if s // q < lo:
        return [s]
    return [s // q + (1 if i < s % q else 0) for i in range(q)]


def _voronoi_reference(g: Graph, rulers):
    best = [None] * g.n
    q = deque()
    for r in sorted(rulers, key=lambda x: g.node_ids[x]):
        best[r] = (0, g.node_ids[r], r)
        q.append(r)
    # BFS layer by layer; within a layer keep the smallest ruler id
    while q:
        nxt = {}
        for u in q:
            du, iu, ru = best[u]
            for w in g.adjacency[u]:
                if best[w] is None:
                    cand = (du + 1, iu, ru)
                    if w not in nxt or cand < nxt[w]:
                        nxt[w] = cand
        for w, c in nxt.items():
            best[w] = c
        q = deque(sorted(nxt))
    return [b[2] for b in best]


def _assemble(g, k, nq, owner, rulers, bound) -> tuple[list, list, list]:
    groups: dict[int, list[int]] = {}
    for v, r in enumerate(owner):
        groups.setdefault(r, []).append(v)
    cluster_of = [0] * g.n
    leaders, members = [], []
    for r in sorted(groups, key=lambda x: g.node_ids[x]):
        mem = sorted(groups[r], key=lambda x: g.node_ids[x])
        pos = 0
        for size in split_sizes(len(mem), k, nq):
            chunk = mem[pos : pos + size]
            pos += size
            lead = r if r in chunk else chunk[0]
            for v in chunk:
                cluster_of[v] = len(leaders)
            leaders.append(lead)
            members.append(chunk)
    return cluster_of, leaders, members


def cluster_partition(
    g: Graph, k: int, mode: str = "reference", net: HybridNetwork | None = None
) -> Clustering:
    """Partition V into clusters of size within [k/NQ, 2k/NQ] and weak
    diameter at most 4·NQ·⌈log2 n⌉.

    Rulers form a (2NQ+1)-spaced ruling set; every node joins its closest
    ruler (ties to the smaller id), and oversized clusters are cut into
    id-contiguous chunks. ``reference`` computes centrally with the greedy
    ruling set; ``in_model`` runs on ``net``: distributed NQ, bit-wise ruling
    set, ruler flooding for β rounds and membership flooding for 2β rounds.
    """
    if not 1 <= k <= g.n:
        raise ValueError("cluster_partition needs 1 <= k <= n")
    lg = log2ceil(g.n)
    if mode == "reference":
        nq = nq_profile(g, k).value
        rs = ruling_set(g, 2 * nq + 1)
        owner = _voronoi_reference(g, rs.members)
        cluster_of, leaders, members = _assemble(g, k, nq, owner, rs.members, None)
        return Clustering(
            k, nq, cluster_of, leaders, members, 4 * nq * lg, (k / nq, 2 * k / nq), rs.members
        )
    if mode != "in_model":
        raise ValueError(f"unknown mode {mode!r}")
    net = net or HybridNetwork(g)
    start = net.round
    nq = nq_graph(g, k, "distributed", net).value
    with net.phase("clustering"):
        rs = ruling_set_in_model(net, 2 * nq + 1)
        owner = _voronoi_in_model(net, rs.members, rs.beta)
        diam = 2 * rs.beta
        balls = net.flood(diam)
        for v in range(g.n):
            mates = [u for u in range(g.n) if owner[u] == owner[v]]
            if any(not (balls[v] >> u) & 1 for u in mates):
                raise AssertionError("cluster member outside the flooded neighbourhood")
        cluster_of, leaders, members = _assemble(g, k, nq, owner, rs.members, None)
    return Clustering(
        k,
        nq,
        cluster_of,
        leaders,
        members,
        max(4 * nq * lg, diam),
        (k / nq, 2 * k / nq),
        rs.members,
        net.round - start,
    )


def _voronoi_in_model(net: HybridNetwork, rulers, rounds: int):
    """Each node keeps the best (distance, ruler id) heard so far and
    forwards it when it improves; ``rounds`` bounds the domination radius."""
    g, ids = net.g, net.ids
    best = [None] * g.n
    for r in rulers:
        best[r] = (0, ids[r], r)
    changed = set(rulers)
    for _ in range(rounds):
        for u in sorted(changed):
            for w in g.adjacency[u]:
                net.send_local(u, w, best[u][:2])
        l_in, _ = net.advance()
        changed = set()
        for w in range(g.n):
            for u, (d, rid) in l_in[w]:
                cand = (d + 1, rid, net.index[rid])
                if best[w] is None or cand < best[w]:
                    best[w] = cand
                    changed.add(w)
    if any(b is None for b in best):
        raise AssertionError("a node is farther than beta from every ruler")
    return [b[2] for b in best]
