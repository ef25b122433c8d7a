"""k-dissemination and k-aggregation through clusters.

Pipeline: learn k, cluster the graph, connect the cluster leaders by a
virtual tree, match equally shaped slot trees between neighbouring
clusters, then move everything to the root cluster (up-phase) and copy it
back down (down-phase). Between global steps each cluster rebalances its
holdings over local edges, so no node ever holds more than NQ_k items.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphcore import ConfigurationError, diameter, log2ceil
from .hybridnet import HybridNetwork, ModelError
from .nq import Clustering, cluster_partition
from .overlay import VirtualTree, build_virtual_tree, subset_tree, tree_aggregate_broadcast

__all__ = [
    "TokenSet",
    "ClusterChain",
    "DisseminationResult",
    "load_balance",
    "build_cluster_chain",
    "k_disseminate",
    "k_aggregate",
    "disseminate_via_aggregate",
    "allocate_indices",
    "flood_disseminate",
]


@dataclass
class TokenSet:
    """k tokens with distinct ids (origin id, sequence) and integer payloads."""

    tokens: dict
    placement: dict

    def __post_init__(self):
        seen = set()
        for v, tids in self.placement.items():
            for t in tids:
                if t in seen:
                    raise ValueError(f"token {t} placed twice")
                if t not in self.tokens:
                    raise ValueError(f"token {t} has no payload")
                seen.add(t)
        if len(seen) != len(self.tokens):
            raise ValueError("some tokens are not placed")

    @property
    def k(self) -> int:
        return len(self.tokens)

    def held_by(self, v: int) -> list:
        """Tokens of node v as (origin, seq, payload) triples."""
        return [(t[0], t[1], self.tokens[t]) for t in self.placement.get(v, ())]

    def all_items(self) -> frozenset:
        return frozenset((t[0], t[1], p) for t, p in self.tokens.items())

    @classmethod
    def from_counts(cls, ids, counts, seed: int = 0, payload_bits: int | None = None):
        """counts[v] tokens at node v with random payloads below 2^payload_bits
        (default ⌈log2 n⌉ bits)."""
        n = len(ids)
        bits = payload_bits if payload_bits is not None else log2ceil(n)
        rng = np.random.default_rng(seed)
        tokens, placement = {}, {}
        for v, c in enumerate(counts):
            if c:
                placement[v] = []
            for s in range(int(c)):
                tid = (ids[v], s)
                tokens[tid] = int(rng.integers(0, 1 << bits))
                placement[v].append(tid)
        return cls(tokens, placement)

    @classmethod
    def one_node(cls, ids, k: int, node: int = 0, seed: int = 0):
        counts = [0] * len(ids)
        counts[node] = k
        return cls.from_counts(ids, counts, seed)

    @classmethod
    def uniform(cls, ids, k: int, seed: int = 0):
        """k tokens at distinct uniformly random nodes when k <= n, otherwise
        spread round-robin over a random permutation."""
        n = len(ids)
        rng = np.random.default_rng(seed)
        counts = [0] * n
        perm = rng.permutation(n)
        for i in range(k):
            counts[int(perm[i % n])] += 1
        return cls.from_counts(ids, counts, seed + 1)

    @classmethod
    def from_spec(cls, ids, k: int, placement: str = "uniform", seed: int = 0, counts=None):
        if placement == "one_node":
            return cls.one_node(ids, k, 0, seed)
        if placement == "uniform":
            return cls.uniform(ids, k, seed)
        if placement == "custom":
            if counts is None or sum(counts) != k:
                raise ValueError("custom placement needs counts summing to k")
            return cls.from_counts(ids, counts, seed)
        raise ValueError(f"unknown placement {placement!r}")


@dataclass
class ClusterChain:
    """Cluster tree over leaders plus matched slot trees.

    ``holder[c][j]`` is the node simulating slot j of cluster c; slot j has
    children 2j+1 and 2j+2. ``counterpart[(u, j, c2)]`` is what node u
    learned as the holder of slot j in neighbouring cluster c2.
    """

    clustering: Clustering
    tree: VirtualTree
    slots: int
    holder: list
    slots_of: dict
    counterpart: dict
    cluster_parent: dict
    cluster_children: dict
    cluster_level: dict
    rounds: int = 0

    def verify(self):
        for (u, j, c2), w in self.counterpart.items():
            if self.holder[c2][j] != w:
                raise AssertionError(f"slot {j} of cluster {c2} misidentified at node {u}")
        for c, p in self.cluster_parent.items():
            if p is None:
                continue
            for j in range(self.slots):
                if (self.holder[c][j], j, p) not in self.counterpart:
                    raise AssertionError("child slot does not know its parent counterpart")
                if (self.holder[p][j], j, c) not in self.counterpart:
                    raise AssertionError("parent slot does not know its child counterpart")


@dataclass
class DisseminationResult:
    outputs: list
    k: int
    nq: int
    rounds: int
    chain: ClusterChain | None = None
    stats: dict = field(default_factory=dict)

    def complete(self, expected) -> bool:
        return all(o == expected for o in self.outputs)


def load_balance(net, members, holdings: dict, diameter_bound: int, eligible=None, combine=None, charge=True):
    """Redistribute the items held inside one cluster.

    The smallest-id member learns all items over ``diameter_bound`` rounds of
    local flooding, sorts them, and deals out contiguous runs so that each
    eligible member gets at most ⌈|M|/|eligible|⌉; the assignment travels
    back in another ``diameter_bound`` rounds. A member listed twice in
    ``eligible`` (two slots) gets two runs. With ``combine`` given,
    items are (index, value) pairs and equal indices are folded first.
    Returns the new holdings of every member.
    """
    ids = net.ids
    members = sorted(members, key=lambda v: ids[v])
    eligible = sorted(eligible if eligible is not None else members, key=lambda v: ids[v])
    items = [x for v in members for x in holdings.get(v, ())]
    if combine is not None:
        folded: dict = {}
        for i, val in items:
            folded[i] = val if i not in folded else combine(folded[i], val)
        items = list(folded.items())
    items.sort()
    q = len(eligible)
    base, extra = divmod(len(items), q)
    out = {v: [] for v in members}
    pos = 0
    for i, v in enumerate(eligible):
        c = base + (1 if i < extra else 0)
        out[v].extend(items[pos : pos + c])
        pos += c
    if charge:
        _charge_balance(net, [members], [len(items)], diameter_bound)
    return out


def _charge_balance(net, clusters, counts, d):
    # every member forwards what it learned once per round along its edges
    g = net.g
    msgs = sum(g.degree(v) for mem in clusters for v in mem) * 2 * d
    bits = sum(c * 3 * net.lg * len(mem) for mem, c in zip(clusters, counts))
    net.idle(2 * d, msgs, bits)


def _pipeline_cap(net) -> int:
    cap = min(net.cfg.global_send_cap, net.cfg.global_recv_cap)
    if cap < 2:
        raise ConfigurationError("the cluster pipeline needs global caps of at least 2")
    return cap


def _assign_slots(ids, members, leader, S):
    order = [leader] + [v for v in sorted(members, key=lambda x: ids[x]) if v != leader]
    holder = order[:S]
    extra = S - len(holder)
    for v in sorted(members, key=lambda x: ids[x])[:extra]:
        holder.append(v)
    return holder


def build_cluster_chain(net: HybridNetwork, clustering: Clustering, k: int) -> ClusterChain:
    """Tree over cluster leaders and the slot matching between neighbours.

    Every cluster simulates a heap of S = ⌊2k/NQ⌋ slots (leader at slot 0,
    the rest by id, lowest ids doubling up when the cluster is small).
    Matching proceeds top-down over heap levels: matched holders of slot j
    exchange the ids of their slot children, and each forwards what it got
    to its own children. Parent-side and child-side exchanges alternate by
    cluster depth parity so a node never acts in both roles at once.
    """
    ids = net.ids
    cap = _pipeline_cap(net) if clustering.count > 1 else 2
    start = net.round
    nq = clustering.nq
    S = max(1, (2 * k) // nq)
    d = clustering.diameter_bound
    with net.phase("cluster_chain"):
        # members learn their cluster mates (and slot layout) locally
        balls = net.flood(d)
        for c, mem in enumerate(clustering.members):
            mask = 0
            for v in mem:
                mask |= 1 << v
            for v in mem:
                if balls[v] & mask != mask:
                    raise AssertionError("cluster wider than its diameter bound")
        leaders = clustering.leaders
        cl_of_leader = {l: c for c, l in enumerate(leaders)}
        tree = subset_tree(net, set(leaders))
        cparent = {cl_of_leader[l]: (None if p is None else cl_of_leader[p]) for l, p in tree.parent.items()}
        cchildren = {cl_of_leader[l]: [cl_of_leader[x] for x in ch] for l, ch in tree.children.items()}
        clevel = {cl_of_leader[l]: lv for l, lv in tree.level.items()}
        sib = {c: i for p, ch in cchildren.items() for i, c in enumerate(ch)}
        holder = [_assign_slots(ids, mem, leaders[c], S) for c, mem in enumerate(clustering.members)]
        if any(len(h) < S for h in holder):
            raise AssertionError("a cluster is too small to simulate its slot tree")
        slots_of: dict = {}
        for c, h in enumerate(holder):
            for j, v in enumerate(h):
                slots_of.setdefault(v, []).append(j)
        cp: dict = {}
        for c, p in cparent.items():
            if p is not None:
                cp[(leaders[c], 0, p)] = leaders[p]
                cp[(leaders[p], 0, c)] = leaders[c]
        per_ex = max(1, cap // 2)
        per_fw = max(1, cap // 4)
        max_children = max((len(ch) for ch in cchildren.values()), default=0)
        g_ex = max(1, math.ceil(max_children / per_ex))
        nbrs = {
            c: ([cparent[c]] if cparent[c] is not None else []) + cchildren[c]
            for c in cchildren
        }
        g_fw = max(1, math.ceil(max((len(x) for x in nbrs.values()), default=1) / per_fw))
        height = S.bit_length()
        staged: dict = {}
        for h in range(height):
            level_slots = [j for j in range(2**h - 1, min(S, 2 ** (h + 1) - 1))]
            kids = lambda j: [x for x in (2 * j + 1, 2 * j + 2) if x < S]
            if any(kids(j) for j in level_slots):
                # exchange along cluster-tree edges
                for parity in (0, 1):
                    for grp in range(g_ex):
                        for c, p in cparent.items():
                            if p is None or clevel[p] % 2 != parity or sib[c] // per_ex != grp:
                                continue
                            for j in level_slots:
                                a, b = holder[p][j], holder[c][j]
                                if not kids(j):
                                    continue
                                net.send_global_to(a, cp[(a, j, c)], (j,) + tuple(ids[holder[p][x]] for x in kids(j)))
                                net.send_global_to(b, cp[(b, j, p)], (j,) + tuple(ids[holder[c][x]] for x in kids(j)))
                        _, g_in = net.advance()
                        for v in range(net.n):
                            for u, (j, *kid_ids) in g_in[v]:
                                c2 = clustering.cluster_of[u]
                                for x, wid in zip(kids(j), kid_ids):
                                    staged[(v, x, c2)] = net.index[wid]
                # each holder forwards counterparts to its own slot children
                for grp in range(g_fw):
                    for c, nb in nbrs.items():
                        for e, c2 in enumerate(nb):
                            if e // per_fw != grp:
                                continue
                            for j in level_slots:
                                u = holder[c][j]
                                for x in kids(j):
                                    w = staged[(u, x, c2)]
                                    net.send_global_to(u, holder[c][x], (x, ids[leaders[c2]], ids[w]))
                    _, g_in = net.advance()
                    for v in range(net.n):
                        for _, (x, lid, wid) in g_in[v]:
                            cp[(v, x, cl_of_leader[net.index[lid]])] = net.index[wid]
    chain = ClusterChain(
        clustering, tree, S, holder, slots_of, cp, cparent, cchildren, clevel, net.round - start
    )
    chain.verify()
    return chain


def _cluster_wide_balance(net, chain, holdings, combine, stats):
    cl = chain.clustering
    # one entry per slot, so balancing is per slot like the sending windows
    eligible = [sorted(hs, key=lambda v: net.ids[v]) for hs in chain.holder]
    counts = []
    for c, mem in enumerate(cl.members):
        new = load_balance(net, mem, holdings, cl.diameter_bound, eligible[c], combine, charge=False)
        holdings.update(new)
        counts.append(sum(len(x) for x in new.values()))
    _charge_balance(net, cl.members, counts, cl.diameter_bound)
    stats["max_holding"] = max(stats.get("max_holding", 0), max(len(x) for x in holdings.values()))


def _ship(net, chain, holdings, senders, targets_of, per, window):
    """One global step: nodes of cluster c in ``senders`` hand items to the
    matched slots of clusters ``targets_of(c)``; items go one per slot per
    round, and clusters take turns in groups of ``per`` by sibling index.
    Returns the items received per node."""
    cl = chain.clustering
    cap_groups = max(1, math.ceil(max((len(ch) for ch in chain.cluster_children.values()), default=1) / per))
    received = {v: [] for v in range(net.n)}
    queues = {}
    for c in senders:
        for v in cl.members[c]:
            if holdings.get(v):
                queues[v] = list(holdings[v])
    for grp in range(cap_groups):
        active = {}
        for c in senders:
            for i, c2 in targets_of(c):
                if i // per == grp:
                    active.setdefault(c, []).append(c2)
        if not active:
            net.idle(window)
            continue
        cursor = {v: 0 for v in queues}
        for _ in range(window):
            for c, dests in active.items():
                for v in cl.members[c]:
                    q = queues.get(v)
                    if not q:
                        continue
                    slots = [j for j in chain.slots_of.get(v, ()) if chain.holder[c][j] == v]
                    for j in slots:
                        if cursor[v] >= len(q):
                            break
                        item = q[cursor[v]]
                        cursor[v] += 1
                        for c2 in dests:
                            net.send_global_to(v, chain.counterpart[(v, j, c2)], item)
            _, g_in = net.advance()
            for v, msgs in enumerate(g_in):
                received[v].extend(p for _, p in msgs)
        for c in active:
            for v in cl.members[c]:
                if v in queues and cursor[v] < len(queues[v]):
                    raise AssertionError("a node held more items than its sending window")
    return received


def _run_pipeline(net, chain, holdings, combine, stats, k):
    """Up-phase to the root cluster with move semantics, then down-phase
    with copies. ``holdings`` maps node -> items; returns per-cluster final
    item lists."""
    cl = chain.clustering
    cap = _pipeline_cap(net) if len(cl.leaders) > 1 else 2
    per = max(1, cap // 2)
    # a balanced cluster holds at most ⌈k/slots⌉ items per slot; this is
    # NQ for k <= n and grows when k > n shares a clustering built for n
    nq = max(cl.nq, math.ceil(k / max(1, chain.slots)))
    depth = chain.tree.depth
    iters = max(net.lg + 1, depth + 1)
    parent = chain.cluster_parent
    children = chain.cluster_children
    sib = {c: i for p, ch in children.items() for i, c in enumerate(ch)}
    root = next(c for c, p in parent.items() if p is None)
    with net.phase("up"):
        for _ in range(iters):
            _cluster_wide_balance(net, chain, holdings, combine, stats)
            if len(cl.leaders) == 1:
                continue
            senders = [c for c in parent if c != root]
            got = _ship(net, chain, holdings, senders, lambda c: [(sib[c], parent[c])], per, nq)
            for c in senders:
                for v in cl.members[c]:
                    holdings[v] = []
            for v, items in got.items():
                if items:
                    holdings[v] = list(holdings.get(v, [])) + items
        _cluster_wide_balance(net, chain, holdings, combine, stats)
    at_root = [x for v in cl.members[root] for x in holdings.get(v, ())]
    stats["root_items"] = len(at_root)
    stats["root_set"] = frozenset(at_root)
    if any(holdings.get(v) for c in parent if c != root for v in cl.members[c]):
        raise AssertionError("up-phase left items outside the root cluster")
    with net.phase("down"):
        frontier = [root]
        for _ in range(iters):
            if len(cl.leaders) == 1:
                break
            sending = [c for c in frontier if children[c]]
            got = _ship(
                net, chain, holdings, sending, lambda c: [(i, c2) for i, c2 in enumerate(children[c])], per, nq
            )
            frontier = [c2 for c in sending for c2 in children[c]]
            for v, items in got.items():
                if items:
                    holdings[v] = items
            _cluster_wide_balance(net, chain, holdings, None, stats)
    finals = []
    for c, mem in enumerate(cl.members):
        finals.append(sorted(x for v in mem for x in holdings.get(v, ())))
    return finals


def _final_flood(net, chain, finals, shape):
    cl = chain.clustering
    d = cl.diameter_bound
    with net.phase("final_flood"):
        balls = net.flood(d)
    outputs = [None] * net.n
    for c, mem in enumerate(cl.members):
        mask = 0
        for v in mem:
            mask |= 1 << v
        out = shape(finals[c])
        for v in mem:
            if balls[v] & mask != mask:
                raise AssertionError("final flood missed part of a cluster")
            outputs[v] = out
    return outputs


def _prepare(net, k, clustering=None):
    g = net.g
    kc = min(k, g.n)
    if clustering is None:
        clustering = cluster_partition(g, kc, "in_model", net)
    chain = build_cluster_chain(net, clustering, kc)
    return clustering, chain


def k_disseminate(net: HybridNetwork, tokens: TokenSet, clustering: Clustering | None = None) -> DisseminationResult:
    """Every node learns every token.

    k is learned by a SUM on the virtual tree; with k > n the clustering is
    built for n instead (clusters then hold k/n times more items each).
    """
    start = net.round
    tree = build_virtual_tree(net)
    with net.phase("count"):
        k = tree_aggregate_broadcast(net, tree, {v: len(tokens.placement.get(v, ())) for v in range(net.n)}, lambda a, b: a + b)[tree.root]
    if k == 0:
        return DisseminationResult([frozenset()] * net.n, 0, 0, net.round - start)
    clustering, chain = _prepare(net, k, clustering)
    holdings = {v: tokens.held_by(v) for v in range(net.n)}
    stats: dict = {}
    finals = _run_pipeline(net, chain, holdings, None, stats, k)
    outputs = _final_flood(net, chain, finals, frozenset)
    for v, o in enumerate(outputs):
        net.transcript.outputs[net.ids[v]] = o
    stats["root_complete"] = stats.pop("root_set") == tokens.all_items()
    return DisseminationResult(outputs, k, clustering.nq, net.round - start, chain, stats)


def k_aggregate(net: HybridNetwork, values, op, k: int | None = None, clustering: Clustering | None = None) -> DisseminationResult:
    """Every node learns op(f_i(v_1), ..., f_i(v_n)) for i in range(k).

    ``values[v]`` is node v's length-k sequence; ``None`` entries are
    skipped (the index then aggregates only the other nodes). Clusters fold
    equal indices on every rebalance, so each cluster ships at most k
    partial results up the cluster tree.
    """
    start = net.round
    if k is None:
        k = len(values[0]) if net.n else 0
    if k == 0:
        return DisseminationResult([()] * net.n, 0, 0, net.round - start)
    clustering, chain = _prepare(net, k, clustering)
    holdings = {v: [(i, x) for i, x in enumerate(values[v]) if x is not None] for v in range(net.n)}
    stats: dict = {}
    finals = _run_pipeline(net, chain, holdings, op, stats, k)
    stats.pop("root_set", None)

    def shape(items):
        got = dict(items)
        return tuple(got.get(i) for i in range(k))

    outputs = _final_flood(net, chain, finals, shape)
    for v, o in enumerate(outputs):
        net.transcript.outputs[net.ids[v]] = o
    return DisseminationResult(outputs, k, clustering.nq, net.round - start, chain, stats)


def allocate_indices(net: HybridNetwork, tokens: TokenSet):
    """Give every token a distinct index in [0, k).

    Token holders form a subset tree; subtree counts flow up, then each node
    hands its children consecutive ranges after reserving its own first.
    Returns (token id -> index, tree).
    """
    ids = net.ids
    holders = {v for v, t in tokens.placement.items() if t}
    cap = min(net.cfg.global_send_cap, net.cfg.global_recv_cap)
    with net.phase("allocate"):
        tree = subset_tree(net, holders)
        own = {v: len(tokens.placement.get(v, ())) for v in tree.members}
        total = dict(own)
        from_child: dict = {}
        pending = {v: len(tree.children[v]) for v in tree.members}
        sent = set()
        groups = max(1, math.ceil(max(1, tree.max_degree) / cap))
        for r in range(tree.depth * groups):
            for v in tree.members:
                p = tree.parent[v]
                if p is None or v in sent or pending[v] or tree.sibling_index(v) // cap != r % groups:
                    continue
                net.send_global_to(v, p, (total[v],))
                sent.add(v)
            _, g_in = net.advance()
            for v in tree.members:
                for u, (cnt,) in g_in[v]:
                    from_child[u] = cnt
                    total[v] += cnt
                    pending[v] -= 1
        offset = {tree.root: 0}
        for _ in range(tree.depth):
            plan = {}
            for v in [x for x in tree.members if x in offset and tree.children[x] and all(c not in offset for c in tree.children[x])]:
                nxt = offset[v] + own[v]
                for i, c in enumerate(tree.children[v]):
                    plan.setdefault(i // cap, []).append((v, c, (nxt,)))
                    nxt += from_child[c]
            for grp in range(groups):
                for v, c, p in plan.get(grp, ()):
                    net.send_global_to(v, c, p)
                _, g_in = net.advance()
                for v in tree.members:
                    for _, (off,) in g_in[v]:
                        offset[v] = off
    index = {}
    for v in tree.members:
        for i, t in enumerate(sorted(tokens.placement.get(v, ()), key=lambda x: x[1])):
            index[t] = offset[v] + i
    if sorted(index.values()) != list(range(tokens.k)):
        raise AssertionError("index allocation is not a bijection")
    return index, tree


def disseminate_via_aggregate(net: HybridNetwork, tokens: TokenSet, clustering: Clustering | None = None) -> DisseminationResult:
    """Dissemination reduced to aggregation: allocate indices, then aggregate
    slot i = the token with index i under 'keep whichever is present'."""
    start = net.round
    if tokens.k == 0:
        return DisseminationResult([frozenset()] * net.n, 0, 0, 0)
    index, _ = allocate_indices(net, tokens)
    k = tokens.k
    values = [[None] * k for _ in range(net.n)]
    for v, tids in tokens.placement.items():
        for t in tids:
            values[v][index[t]] = (t[0], t[1], tokens.tokens[t])
    res = k_aggregate(net, values, lambda a, b: a if a is not None else b, k, clustering)
    outputs = [frozenset(o) for o in res.outputs]
    res.stats["index"] = index
    return DisseminationResult(outputs, k, res.nq, net.round - start, res.chain, res.stats)


def flood_disseminate(net: HybridNetwork, tokens: TokenSet) -> DisseminationResult:
    """Baseline: local flooding only, until every node has heard everything
    (D rounds)."""
    start = net.round
    D = diameter(net.g)
    with net.phase("flood"):
        net.flood(D)
    out = tokens.all_items()
    return DisseminationResult([out] * net.n, tokens.k, 0, net.round - start)
