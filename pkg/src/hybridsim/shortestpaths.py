"""Skeleton graphs, spanners, helper-set scheduling and the distance
pipelines built on them (SSSP, k-SSP, (k, l)-SP and APSP).

Nodes compute on what they have learned: the h-hop ball after h rounds of
local flooding, and whatever was broadcast by k-dissemination. That local
computation is done here with a hand-written hop-staged relaxation and a
heap Dijkstra; the scipy oracles in graphcore are only used to report
estimates against ground truth.
"""
from __future__ import annotations

import csv
import heapq
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .dissemination import TokenSet, k_disseminate
from .graphcore import ConfigurationError, Graph, bfs_hops, log2ceil, oracle_distances
from .hybridnet import HybridNetwork, ModelConfig, NodeProgram, execute
from .nq import cluster_partition, nq_graph
from .overlay import build_virtual_tree, tree_aggregate_broadcast
from .routing import ARB_RAND, MEMBERSHIP_CONSTANT, RAND_RAND, RoutingInstance, kl_route

__all__ = [
    "SkeletonGraph",
    "Spanner",
    "KSHelperSets",
    "DistanceEstimate",
    "ScheduleResult",
    "SkeletonBellmanFord",
    "build_skeleton",
    "build_spanner",
    "helper_sets_ks",
    "schedule_on_skeleton",
    "run_solo",
    "sssp",
    "k_ssp",
    "kl_sp",
    "apsp_unweighted",
    "apsp_unweighted_eps",
    "apsp_weighted_spanner",
    "apsp_weighted_skeleton",
    "XI",
    "SPANNER_CONSTANT",
]

XI = 4  # skeleton hop constant
SPANNER_CONSTANT = 1  # c_sp in the edge-count bound
INF = math.inf


# local computation


def _relax(g: Graph, sources, limit: int | None = None, weighted: bool = True):
    """Hop-staged Bellman-Ford from each source, at most ``limit`` stages.

    Returns (distance matrix, stages until stable or limit).
    """
    sources = list(sources)
    n = g.n
    cur = np.full((len(sources), n), np.inf)
    if not sources:
        return cur, 0
    cur[np.arange(len(sources)), sources] = 0.0
    if n == 1:
        return cur, 0
    ptr = [0]
    nbr, wts = [], []
    for v in range(n):
        for u in g.adjacency[v]:
            nbr.append(u)
            wts.append(g.weight(v, u) if weighted else 1)
        ptr.append(len(nbr))
    idx = np.array(nbr)
    w = np.array(wts, dtype=np.float64)
    starts = np.array(ptr[:-1])
    stages = 0
    cap = n - 1 if limit is None else min(limit, n - 1)
    block = max(1, 4_000_000 // max(1, len(idx)))
    while stages < cap:
        changed = False
        for a in range(0, len(sources), block):
            part = cur[a : a + block]
            best = np.minimum.reduceat(part[:, idx] + w, starts, axis=1)
            nxt = np.minimum(part, best)
            if not changed and not np.array_equal(nxt, part):
                changed = True
            cur[a : a + block] = nxt
        if not changed:
            break
        stages += 1
    return cur, stages


def _dijkstra(adj: dict, src) -> dict:
    dist = {src: 0}
    heap = [(0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj.get(u, ()):
            nd = d + w
            if nd < dist.get(v, INF):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _adjacency(edges: dict) -> dict:
    adj = defaultdict(list)
    for (u, v), w in edges.items():
        adj[u].append((v, w))
        adj[v].append((u, w))
    return adj


def _argmin_rows(mat: np.ndarray, keys) -> tuple[np.ndarray, np.ndarray]:
    """Per column, the row with least value, ties to the smallest key."""
    order = np.argsort(np.asarray(keys), kind="stable")
    sub = mat[order]
    pos = np.argmin(sub, axis=0)
    return order[pos], sub[pos, np.arange(mat.shape[1])]


# broadcasting integer records


def _broadcast_records(net: HybridNetwork, records: dict, widths) -> dict:
    """Make ``records[v]`` (lists of int tuples) known to every node.

    Each field is split into ⌈width/⌈log2 n⌉⌉ chunks and sent as one token
    per chunk by k-dissemination. Returns origin id -> list of tuples.
    """
    lg = max(1, net.lg)
    chunks = [max(1, math.ceil(max(1, wd) / lg)) for wd in widths]
    per = sum(chunks)
    mask = (1 << lg) - 1
    tokens, place = {}, {}
    for v, recs in records.items():
        if not recs:
            continue
        place[v] = []
        for r, rec in enumerate(recs):
            seq = r * per
            for f, val in enumerate(rec):
                if val < 0:
                    raise ValueError("records hold non-negative integers")
                for b in range(chunks[f]):
                    tid = (net.ids[v], seq)
                    tokens[tid] = (val >> (b * lg)) & mask
                    place[v].append(tid)
                    seq += 1
    res = k_disseminate(net, TokenSet(tokens, place))
    if any(o != res.outputs[0] for o in res.outputs):
        raise AssertionError("nodes disagree after dissemination")
    got = defaultdict(dict)
    for origin, seq, part in res.outputs[0] if res.outputs else ():
        got[origin][seq] = part
    out = {}
    for origin, parts in got.items():
        recs = []
        for r in range(len(parts) // per):
            seq, rec = r * per, []
            for f in range(len(widths)):
                val = 0
                for b in range(chunks[f]):
                    val |= parts[seq] << (b * lg)
                    seq += 1
                rec.append(val)
            recs.append(tuple(rec))
        out[origin] = recs
    return out


def _id_width(net) -> int:
    return max(1, max(net.ids).bit_length())


def _dist_width(g: Graph) -> int:
    return max(1, (g.max_weight() * max(1, g.n - 1)).bit_length())


def _broadcast_ids(net):
    with net.phase("broadcast_ids"):
        tokens = {(net.ids[v], 0): 0 for v in range(net.n)}
        k_disseminate(net, TokenSet(tokens, {v: [(net.ids[v], 0)] for v in range(net.n)}))


# result type


@dataclass
class DistanceEstimate:
    """Estimates ``values[i, j]`` for source ``sources[i]`` and target
    ``targets[j]`` (node indices), with the declared stretch."""

    sources: list
    targets: list
    values: np.ndarray
    stretch: float
    eps: float | None = None
    rounds: int = 0
    flags: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def value(self, s: int, t: int) -> float:
        return float(self.values[self.sources.index(s), self.targets.index(t)])

    def oracle(self, g: Graph) -> np.ndarray:
        table = oracle_distances(g, self.sources)
        return table.dist[:, self.targets]

    def evaluate(self, g: Graph, tol: float = 1e-9) -> dict:
        """Compare against exact distances: worst ratio, underestimates and
        violations of the declared stretch."""
        exact = self.oracle(g)
        est = self.values
        pos = exact > 0
        ratio = np.ones_like(exact)
        ratio[pos] = est[pos] / exact[pos]
        zero_bad = int(np.sum(~pos & (est != 0)))
        under = int(np.sum(est < exact - tol))
        over = int(np.sum(ratio > self.stretch + tol)) + zero_bad
        return {
            "pairs": int(exact.size),
            "max_ratio": float(ratio.max()) if ratio.size else 1.0,
            "underestimates": under,
            "violations": over,
        }

    def to_csv(self, g: Graph) -> str:
        exact = self.oracle(g)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "target", "estimate", "oracle", "ratio"])
        for i, s in enumerate(self.sources):
            for j, t in enumerate(self.targets):
                e, d = self.values[i, j], exact[i, j]
                r = e / d if d > 0 else 1.0
                w.writerow([s, t, _num(e), _num(d), f"{r:.6g}"])
        return buf.getvalue()


def _num(x):
    return int(x) if math.isfinite(x) else "inf"


# skeleton


@dataclass
class SkeletonGraph:
    """Sampled nodes joined by virtual edges of at most h hops.

    ``nodes`` are graph indices in increasing order; ``edges`` maps index
    pairs (a < b) to d^h(a, b); ``dist_h[i]`` is d^h from ``nodes[i]`` to
    every graph node.
    """

    x: float
    h: int
    xi: float
    nodes: list
    edges: dict
    dist_h: np.ndarray
    flags: list = field(default_factory=list)
    rounds: int = 0

    @property
    def probability(self) -> float:
        return 1.0 / self.x

    @property
    def position(self) -> dict:
        return {v: i for i, v in enumerate(self.nodes)}

    def as_graph(self) -> Graph:
        """The skeleton on positions 0..|V_S|-1 (increasing graph index)."""
        pos = self.position
        weights = {(pos[a], pos[b]): w for (a, b), w in self.edges.items()}
        return Graph(len(self.nodes), list(weights), weights or None, validate=False)

    def distances(self) -> dict:
        """d_S between all skeleton nodes, keyed by graph index."""
        adj = _adjacency(self.edges)
        return {u: _dijkstra(adj, u) for u in self.nodes}


def build_skeleton(net: HybridNetwork, x: float, xi: float = XI, include=(), tries: int = 8) -> SkeletonGraph:
    """Sample each node with probability 1/x (nodes in ``include`` always
    join), learn the h-hop ball with h = ⌈xi·x·ln n⌉, and connect sampled
    nodes within h hops by edges of weight d^h."""
    g, n = net.g, net.n
    if not 1 <= x <= n:
        raise ValueError("need 1 <= x <= n")
    start = net.round
    flags = []
    h = max(1, math.ceil(xi * x * math.log(n))) if n > 1 else 1
    forced = set(include)
    nodes = []
    for attempt in range(tries):
        nodes = sorted(v for v in range(n) if v in forced or net.rng(v).random() < 1.0 / x)
        if nodes:
            break
        flags.append("empty skeleton, resampled")
    if not nodes:
        raise ConfigurationError(f"skeleton stayed empty after {tries} samples")
    with net.phase("skeleton"):
        net.flood(min(h, max(0, n - 1)))
    dist_h, _ = _relax(g, nodes, h)
    hops, _ = _relax(g, nodes, h, weighted=False)
    edges = {}
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            if hops[i, b] <= h:
                edges[(a, b)] = int(dist_h[i, b])
    return SkeletonGraph(x, h, xi, nodes, edges, dist_h, flags, net.round - start)


# spanner


@dataclass
class Spanner:
    kappa: int
    n: int
    edges: dict
    stretch_bound: int
    size_bound: float
    flags: list = field(default_factory=list)
    rounds: int = 0

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def within_size_bound(self) -> bool:
        return self.edge_count <= self.size_bound

    def as_graph(self, ids=None) -> Graph:
        return Graph(self.n, list(self.edges), dict(self.edges), ids, validate=False)


def build_spanner(g_or_skeleton, kappa: int, seed: int = 0) -> Spanner:
    """Randomized clustered (2κ-1)-spanner.

    κ-1 rounds of cluster sampling at rate n^(-1/κ): a node next to a
    sampled cluster joins it through its lightest such edge and keeps the
    lightest edge to every cluster lighter than that; a node with no sampled
    neighbour cluster keeps its lightest edge to every neighbour cluster and
    leaves. Finally every node keeps its lightest edge to each remaining
    neighbour cluster. For a skeleton the result is keyed by graph index.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if isinstance(g_or_skeleton, SkeletonGraph):
        sk = g_or_skeleton
        names = list(sk.nodes)
        pos = sk.position
        wmap = {(pos[a], pos[b]): w for (a, b), w in sk.edges.items()}
        n = len(names)
    else:
        g = g_or_skeleton
        names = list(range(g.n))
        wmap = {(u, v): g.weight(u, v) for u, v in g.edges()}
        n = g.n
    rng = np.random.default_rng(seed)
    rest = defaultdict(dict)
    for (u, v), w in wmap.items():
        rest[u][v] = w
        rest[v][u] = w
    kept = set()

    def keep(u, v):
        kept.add((min(u, v), max(u, v)))

    def lightest(v, cluster):
        best = {}
        for u, w in rest[v].items():
            c = cluster.get(u)
            if c is None:
                continue
            key = (w, u)
            if c not in best or key < best[c]:
                best[c] = key
        return best

    cluster = {v: v for v in range(n)}
    p = n ** (-1.0 / kappa) if n > 1 else 1.0
    for _ in range(kappa - 1):
        centers = sorted(set(cluster.values()))
        draws = rng.random(len(centers))
        sampled = {c for c, r in zip(centers, draws) if r < p}
        nxt = {v: c for v, c in cluster.items() if c in sampled}
        drop = []  # (v, cluster) whose edges go
        for v in range(n):
            if v in nxt or not rest[v]:
                continue
            best = lightest(v, cluster)
            near = sorted((key, c) for c, key in best.items() if c in sampled)
            if not near:
                for c, (w, u) in best.items():
                    keep(v, u)
                    drop.append((v, c))
                continue
            (wmin, umin), cstar = near[0]
            keep(v, umin)
            nxt[v] = cstar
            drop.append((v, cstar))
            for c, (w, u) in best.items():
                if (w, u) < (wmin, umin):
                    keep(v, u)
                    drop.append((v, c))
        for v, c in drop:
            for u in [u for u in rest[v] if cluster.get(u) == c]:
                rest[v].pop(u, None)
                rest[u].pop(v, None)
        for v in range(n):
            for u in [u for u in rest[v] if u not in nxt or v not in nxt or nxt[u] == nxt[v]]:
                rest[v].pop(u, None)
                rest[u].pop(v, None)
        cluster = nxt
    for v in range(n):
        for c, (w, u) in lightest(v, cluster).items():
            if c != cluster.get(v):
                keep(v, u)
    edges = {}
    for a, b in kept:
        w = wmap[(a, b)] if (a, b) in wmap else wmap[(b, a)]
        u, v = names[a], names[b]
        edges[(min(u, v), max(u, v))] = w
    size = SPANNER_CONSTANT * kappa * n ** (1 + 1 / kappa) * max(1, log2ceil(n))
    flags = [] if len(edges) <= size else [f"{len(edges)} edges exceed the size bound {size:.0f}"]
    return Spanner(kappa, n, edges, 2 * kappa - 1, size, flags, 2 * kappa)


# helper sets


@dataclass
class KSHelperSets:
    x: float
    W: list
    helpers: dict
    mu: int
    max_hop: int
    max_membership: int
    flags: list = field(default_factory=list)
    rounds: int = 0

    def membership(self) -> dict:
        count: dict = defaultdict(int)
        for hs in self.helpers.values():
            for u in hs:
                count[u] += 1
        return dict(count)

    def valid(self, n: int, c_m: int = MEMBERSHIP_CONSTANT) -> bool:
        return (
            all(len(h) >= self.mu for h in self.helpers.values())
            and self.max_hop <= self.mu
            and self.max_membership <= c_m * max(1, log2ceil(n))
        )


def helper_sets_ks(net: HybridNetwork, W, x: float, c: float = 2.0) -> KSHelperSets:
    """Helper set H_w of at least μ = ⌈x·ln n⌉ nodes within μ hops of w.

    w takes the smallest radius r whose ball holds μ nodes; every node of
    that ball joins with probability min(1, c·μ/|ball|). Sets left short
    are topped up with the closest non-members (flagged).
    """
    n = net.n
    start = net.round
    W = sorted(set(W))
    mu = max(1, min(n, math.ceil(x * math.log(max(n, 2)))))
    flags = []
    helpers = {}
    if W:
        with net.phase("helper_sets"):
            net.flood(min(mu, n - 1))
            # w announces (radius, ball size), then learns who joined
            net.idle(2 * mu, len(W) * mu, len(W) * mu * net.lg)
        short = 0
        for w in W:
            hops = bfs_hops(net.g, w, limit=mu)
            order = sorted((d, net.ids[u], u) for u, d in enumerate(hops) if d >= 0)
            r = order[mu - 1][0]
            ballw = [u for d, _, u in order if d <= r]
            q = min(1.0, c * mu / len(ballw))
            hs = [u for u in ballw if net.rng(u).random() < q]
            if len(hs) < mu:
                short += 1
                have = set(hs)
                for _, _, u in order:
                    if len(hs) >= mu:
                        break
                    if u not in have:
                        hs.append(u)
            helpers[w] = sorted(hs)
        if short:
            flags.append(f"{short} helper sets topped up")
    member = defaultdict(int)
    max_hop = 0
    for w, hs in helpers.items():
        hops = bfs_hops(net.g, w, limit=mu)
        max_hop = max(max_hop, max(hops[u] for u in hs))
        for u in hs:
            member[u] += 1
    mm = max(member.values(), default=0)
    if mm > MEMBERSHIP_CONSTANT * max(1, net.lg):
        flags.append(f"membership {mm} above {MEMBERSHIP_CONSTANT}·log n")
    return KSHelperSets(x, W, helpers, mu, max_hop, mm, flags, net.round - start)


# scheduling on the skeleton


class SkeletonBellmanFord(NodeProgram):
    """Weighted Bellman-Ford on the skeleton for a fixed number of rounds.

    Input per node: {"weights": {neighbour id: weight}, "source": bool}.
    Output: the node's distance to the source (inf if unreached).
    """

    def __init__(self, rounds: int):
        self.rounds = max(1, rounds)

    def init(self, ctx):
        inp = ctx.input or {}
        ctx.state["w"] = inp.get("weights", {})
        ctx.state["d"] = 0 if inp.get("source") else INF
        ctx.state["sent"] = INF

    def on_round(self, ctx, local_inbox, global_inbox):
        st = ctx.state
        for _, d in local_inbox:
            st["d"] = min(st["d"], d)
        if st["d"] < st["sent"]:
            for u, w in st["w"].items():
                ctx.send_local(u, st["d"] + w)
            st["sent"] = st["d"]
        if ctx.round >= self.rounds:
            ctx.output(st["d"])
            ctx.halt()


class _SimContext:
    """NodeContext look-alike for one program at one skeleton node."""

    def __init__(self, sched, prog: int, pos: int, ident: int, nbrs, inp, rng):
        self._s = sched
        self._prog = prog
        self.index = pos
        self.id = ident
        self.neighbors = nbrs
        self.state: dict = {}
        self.input = inp
        self._rng = rng
        self._halted = False

    @property
    def n(self):
        return self._s.n_s

    @property
    def cfg(self):
        return self._s.cfg

    @property
    def round(self):
        return self._s.step + 1

    @property
    def rng(self):
        return self._rng

    def send_local(self, neighbor_id, payload=None):
        if neighbor_id not in self._s.nbr_sets[self.index]:
            raise ConfigurationError(f"skeleton send from {self.id} to non-neighbour {neighbor_id}")
        self._s.out_local.append((self._prog, self.index, neighbor_id, payload))

    def send_global(self, to_id, payload=None):
        self._s.out_global.append((self._prog, self.index, to_id, payload))

    def output(self, value):
        self._s.outputs[self._prog][self.id] = value

    def halt(self):
        self._halted = True


@dataclass
class ScheduleResult:
    outputs: list
    rounds: int
    steps: int
    helpers: KSHelperSets
    per_helper: int
    stats: dict = field(default_factory=dict)


class _Scheduler:
    def __init__(self, sk_graph: Graph, cfg):
        self.n_s = sk_graph.n
        self.cfg = cfg
        self.nbr_sets = [set(sk_graph.adjacency[i]) for i in range(sk_graph.n)]
        self.step = 0
        self.out_local: list = []
        self.out_global: list = []
        self.outputs: list = []


def _program_rng(seed: int, ident: int):
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, ident & 0xFFFFFFFFFFFF])
    return np.random.Generator(np.random.Philox(ss))


def run_solo(skeleton: SkeletonGraph, program: NodeProgram, T: int, seed: int = 0, inputs=None) -> dict:
    """Outputs of ``program`` run alone on the skeleton (ids = positions)."""
    sg = skeleton.as_graph()
    return dict(execute(sg, ModelConfig.for_graph(sg), program, T, seed, inputs).outputs)


def schedule_on_skeleton(
    net: HybridNetwork,
    skeleton: SkeletonGraph,
    programs,
    gamma: int | None = None,
    T: int | None = None,
    inputs=None,
    seeds=None,
) -> ScheduleResult:
    """Run k skeleton programs side by side through helper sets.

    Skeleton node u hands its edges and inputs to its helpers H_u; helper j
    simulates programs jℓ .. (j+1)ℓ-1 with ℓ = ⌈k/|H_u|⌉. A simulated round
    costs 2μ + h local rounds for skeleton-edge messages (paired helpers are
    that close) plus the global rounds needed to push the programs' global
    messages between paired helpers within the caps. Programs see skeleton
    positions as ids, exactly as in :func:`run_solo`.
    """
    programs = list(programs)
    k = len(programs)
    start = net.round
    inputs = inputs or [None] * k
    seeds = seeds or [0] * k
    gamma = gamma or net.cfg.global_send_cap
    sg = skeleton.as_graph()
    T = T or max(1, sg.n - 1)
    hs = helper_sets_ks(net, skeleton.nodes, skeleton.x)
    pos = skeleton.position
    n_s = sg.n
    # job assignment: helper j of u runs programs jℓ..(j+1)ℓ-1
    size = min((len(h) for h in hs.helpers.values()), default=1)
    ell = max(1, math.ceil(k / max(1, size)))
    runner = {}
    for u in skeleton.nodes:
        hl = hs.helpers[u]
        for i in range(k):
            runner[(i, pos[u])] = hl[min(i // ell, len(hl) - 1)]
    step_local = 2 * hs.mu + skeleton.h
    with net.phase("schedule_setup"):
        net.idle(hs.mu, sum(len(h) for h in hs.helpers.values()), 0)
    sched = _Scheduler(sg, ModelConfig.for_graph(sg))
    sched.outputs = [dict() for _ in range(k)]
    ctxs = []
    for i, prog in enumerate(programs):
        row = []
        inp = inputs[i] or {}
        for p in range(n_s):
            c = _SimContext(sched, i, p, p, tuple(sg.adjacency[p]), inp.get(p), _program_rng(seeds[i], p))
            prog.init(c)
            row.append(c)
        ctxs.append(row)
    l_in = [[[] for _ in range(n_s)] for _ in range(k)]
    g_in = [[[] for _ in range(n_s)] for _ in range(k)]
    global_rounds = 0
    with net.phase("schedule_run"):
        while sched.step < T:
            sched.out_local, sched.out_global = [], []
            for i, prog in enumerate(programs):
                for c in ctxs[i]:
                    if not c._halted:
                        prog.on_round(c, l_in[i][c.index], g_in[i][c.index])
            l_in = [[[] for _ in range(n_s)] for _ in range(k)]
            g_in = [[[] for _ in range(n_s)] for _ in range(k)]
            for i, src, dst, p in sched.out_local:
                l_in[i][dst].append((src, p))
            net.idle(step_local, len(sched.out_local), 0)
            global_rounds += _push_global(net, runner, sched.out_global, g_in)
            for i in range(k):
                for box in l_in[i]:
                    box.sort(key=lambda m: m[0])
                for box in g_in[i]:
                    box.sort(key=lambda m: m[0])
            sched.step += 1
            if all(c._halted for row in ctxs for c in row):
                break
    stats = {"step_local_rounds": step_local, "global_rounds": global_rounds, "flags": list(hs.flags)}
    return ScheduleResult(sched.outputs, net.round - start, sched.step, hs, ell, stats)


def _push_global(net, runner, msgs, g_in) -> int:
    """Send (program, src pos, dst pos, payload) between the helpers that
    simulate them. Messages are packed greedily into rounds so that no
    helper exceeds its send or receive cap."""
    if not msgs:
        return 0
    cap_s, cap_r = net.cfg.global_send_cap, net.cfg.global_recv_cap
    queue = []
    for i, src, dst, p in msgs:
        a, b = runner[(i, src)], runner[(i, dst)]
        if a == b:
            g_in[i][dst].append((src, p))
        else:
            queue.append((a, b, i, src, dst, p))
    rounds = 0
    while queue:
        sent, recv, later = defaultdict(int), defaultdict(int), []
        for a, b, i, src, dst, p in queue:
            if sent[a] < cap_s and recv[b] < cap_r:
                sent[a] += 1
                recv[b] += 1
                net.send_global_to(a, b, (i, p))
                g_in[i][dst].append((src, p))
            else:
                later.append((a, b, i, src, dst, p))
        net.advance()
        rounds += 1
        queue = later
    return rounds


# SSSP


def sssp(net: HybridNetwork, source: int, eps: float = 0.5, mode: str = "in_model") -> DistanceEstimate:
    """Distances from ``source`` to every node with stretch ≤ 1+ε.

    ``in_model`` runs exact Bellman-Ford over local edges in stages of
    doubling length; after each stage an OR over the virtual tree tells
    whether any estimate still changed. ``oracle`` reads exact distances.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = net.g
    start = net.round
    if mode == "oracle":
        row = oracle_distances(g, [source]).dist[0]
        return DistanceEstimate([source], list(range(g.n)), np.atleast_2d(row), 1 + eps, eps)
    if mode != "in_model":
        raise ValueError(f"unknown mode {mode!r}")
    dist, stages = _relax(g, [source])
    if g.n > 1:
        tree = build_virtual_tree(net)
        with net.phase("sssp"):
            done, length = 0, 1
            while True:
                net.idle(length, 2 * g.m, 2 * g.m * net.lg)
                done += length
                # the stage after the last change is quiet everywhere
                quiet = done > stages
                tree_aggregate_broadcast(net, tree, {v: int(not quiet) for v in range(g.n)}, max)
                if quiet:
                    break
                length *= 2
    return DistanceEstimate([source], list(range(g.n)), dist, 1 + eps, eps, net.round - start)


# k-SSP


def _skeleton_sssp(net, sk: SkeletonGraph, roots: list, seed: int = 0):
    """Exact skeleton distances from each root (graph indices), computed by
    scheduled Bellman-Ford programs. Returns (matrix |roots| × |V_S|, result)."""
    pos = sk.position
    sg = sk.as_graph()
    weights = {p: {} for p in range(sg.n)}
    for (a, b), w in sk.edges.items():
        weights[pos[a]][pos[b]] = w
        weights[pos[b]][pos[a]] = w
    T = max(1, sg.n - 1)
    prog = SkeletonBellmanFord(T)
    inputs = [{p: {"weights": weights[p], "source": p == pos[r]} for p in range(sg.n)} for r in roots]
    res = schedule_on_skeleton(net, sk, [prog] * len(roots), T=T, inputs=inputs, seeds=[seed] * len(roots))
    mat = np.array([[res.outputs[i].get(p, INF) for p in range(sg.n)] for i in range(len(roots))], dtype=float)
    return mat.reshape(len(roots), sg.n), res


def _extend(sk: SkeletonGraph, d_sk: np.ndarray) -> np.ndarray:
    """d̃(v, r) = min over skeleton u of d^h(v, u) + d_S(u, r), for all v."""
    out = np.full((d_sk.shape[0], sk.dist_h.shape[1]), np.inf)
    for j in range(len(sk.nodes)):
        np.minimum(out, d_sk[:, j : j + 1] + sk.dist_h[j][None, :], out=out)
    return out


def k_ssp(net: HybridNetwork, S, eps: float = 0.5, source_mode: str = "random", xi: float = XI, seed: int = 0) -> DistanceEstimate:
    """Every node learns estimates to each source in S.

    With at most γ sources (γ = global send cap) the SSSP instances run in
    parallel. Otherwise a skeleton with sampling probability √(γ/k) is
    built. Random sources join the skeleton directly (stretch 1+ε).
    Arbitrary sources use their closest skeleton node as proxy and publish
    (proxy, d^h) by k-dissemination (stretch 3+ε).
    """
    if source_mode not in ("random", "arbitrary"):
        raise ValueError(f"unknown source mode {source_mode!r}")
    g, n = net.g, net.n
    S = sorted(set(S))
    k = len(S)
    stretch = 1 + eps if source_mode == "random" else 3 + eps
    start = net.round
    if k == 0:
        return DistanceEstimate([], list(range(n)), np.zeros((0, n)), stretch, eps)
    gamma = net.cfg.global_send_cap
    flags, stats = [], {}
    if k <= gamma:
        # run one after another; rounds are an upper bound on the parallel run
        with net.phase("k_ssp_parallel"):
            rows = [sssp(net, s, eps).values[0] for s in S]
        stats["branch"] = "parallel"
        est = np.vstack(rows)
        return DistanceEstimate(S, list(range(n)), est, stretch, eps, net.round - start, flags, stats)
    x = min(n, max(1.0, math.sqrt(k / gamma)))
    if source_mode == "random":
        sk = build_skeleton(net, x, xi, include=S)
        d_sk, res = _skeleton_sssp(net, sk, S, seed)
        est = _extend(sk, d_sk)
        stats.update(branch="skeleton", skeleton_nodes=len(sk.nodes), h=sk.h)
        flags += sk.flags + res.stats["flags"]
        return DistanceEstimate(S, list(range(n)), est, stretch, eps, net.round - start, flags, stats)
    sk = build_skeleton(net, x, xi)
    proxy, to_proxy = {}, {}
    for s in S:
        col = sk.dist_h[:, s]
        j, d = _argmin_rows(col[:, None], [net.ids[u] for u in sk.nodes])
        if math.isfinite(d[0]):
            proxy[s] = sk.nodes[int(j[0])]
            to_proxy[s] = int(d[0])
        else:
            flags.append(f"source {s} has no skeleton node within h hops")
    roots = sorted(set(proxy.values()))
    via = np.full((k, n), np.inf)
    if roots:
        d_sk, res = _skeleton_sssp(net, sk, roots, seed)
        flags += res.stats["flags"]
        ext = _extend(sk, d_sk)
        with net.phase("proxy_broadcast"):
            recs = {s: [(net.ids[proxy[s]], to_proxy[s])] for s in proxy}
            got = _broadcast_records(net, recs, [_id_width(net), _dist_width(g)])
        row_of = {r: i for i, r in enumerate(roots)}
        for i, s in enumerate(S):
            if net.ids[s] in got:
                pid, dd = got[net.ids[s]][0]
                via[i] = ext[row_of[net.index[pid]]] + dd
    direct, _ = _relax(g, S, sk.h)
    est = np.minimum(direct, via)
    stats.update(branch="skeleton", skeleton_nodes=len(sk.nodes), h=sk.h, proxies=len(roots))
    flags += sk.flags
    return DistanceEstimate(S, list(range(n)), est, stretch, eps, net.round - start, flags, stats)


# (k, l)-SP


def _route_values(net, S, T, vals: dict, scenario: str, seed: int):
    """Deliver integer ``vals[(s, t)]`` from s to t in ⌈log2 n⌉-bit chunks.
    Returns ({t: {s: value}}, rounds, exact?)."""
    lg = max(1, net.lg)
    width = max(1, max((v.bit_length() for v in vals.values()), default=1))
    width = max(width, _dist_width(net.g))
    chunks = math.ceil(width / lg)
    mask = (1 << lg) - 1
    got = defaultdict(lambda: defaultdict(int))
    exact = True
    for b in range(chunks):
        pay = {(s, t): (v >> (b * lg)) & mask for (s, t), v in vals.items()}
        inst = RoutingInstance(list(S), list(T), scenario, len(S), len(T), pay)
        res = kl_route(net, inst, seed=seed + b)
        exact &= res.exact(inst)
        for t, row in res.delivered.items():
            for s, p in row.items():
                got[t][s] |= p << (b * lg)
    return got, exact


def kl_sp(net: HybridNetwork, S, T, eps: float = 0.5, case: int = 1, seed: int = 0) -> DistanceEstimate:
    """Targets learn estimates to all sources.

    Case 1 (arbitrary S, random T): one SSSP per target, then each source
    routes d̃(s, t) to t. Case 2 (both random): k-SSP from the targets in
    random-source mode, then routing between random sides.
    """
    g, n = net.g, net.n
    S, T = sorted(set(S)), sorted(set(T))
    start = net.round
    k, ell = len(S), len(T)
    flags = []
    if not S or not T:
        return DistanceEstimate(S, T, np.zeros((k, ell)), 1 + eps, eps)
    nq = nq_graph(g, min(n, k)).value
    if case == 1:
        if ell > nq:
            flags.append(f"case 1 needs l <= NQ_k ({ell} > {nq})")
        with net.phase("kl_sssp"):
            rows = [sssp(net, t, eps).values[0] for t in T]
        from_t = np.vstack(rows)
        scenario = ARB_RAND
    elif case == 2:
        if ell > nq * nq:
            flags.append(f"case 2 needs l <= NQ_k^2 ({ell} > {nq * nq})")
        if k * ell > nq * n:
            flags.append(f"case 2 needs k·l <= NQ_k·n ({k * ell} > {nq * n})")
        from_t = k_ssp(net, T, eps, "random", seed=seed).values
        scenario = RAND_RAND
    else:
        raise ValueError("case must be 1 or 2")
    vals = {}
    for j, t in enumerate(T):
        for s in S:
            d = from_t[j, s]
            if not math.isfinite(d):
                raise AssertionError(f"no estimate from target {t} to source {s}")
            vals[(s, t)] = int(round(d))
    with net.phase("kl_route"):
        got, exact = _route_values(net, S, T, vals, scenario, seed)
    est = np.full((k, ell), np.inf)
    for j, t in enumerate(T):
        for i, s in enumerate(S):
            if s in got.get(t, {}):
                est[i, j] = got[t][s]
    stats = {"routing_exact": exact, "nq": nq}
    return DistanceEstimate(S, T, est, 1 + eps, eps, net.round - start, flags, stats)


# APSP


def apsp_unweighted(net: HybridNetwork, eps: float = 0.5, ball_radius: int | None = None) -> DistanceEstimate:
    """All-pairs estimates with stretch ≤ 1+3ε+ε² in unweighted graphs.

    Cluster with k = n, run SSSP from each leader, learn the x-hop ball
    (x = 4·NQ_n·⌈log2 n⌉/ε) and publish each node's closest leader with its
    distance. Inside the ball the estimate is exact; outside it is
    d̂(v, c_w) + d(w, c_w). ``ball_radius`` overrides x for experiments;
    below the default the stretch bound is no longer guaranteed.
    """
    g, n = net.g, net.n
    if g.weighted:
        raise ValueError("apsp_unweighted needs an unweighted graph")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    start = net.round
    nq = nq_graph(g, n, "distributed", net).value
    _broadcast_ids(net)
    cl = cluster_partition(g, n, "in_model", net)
    R = sorted(cl.leaders)
    with net.phase("leader_sssp"):
        dhat = np.vstack([sssp(net, r, eps).values[0] for r in R])
    x = math.ceil(4 * nq * max(1, log2ceil(n)) / eps) if ball_radius is None else ball_radius
    with net.phase("ball"):
        net.flood(min(x, max(0, n - 1)))
    near, _ = _relax(g, range(n), x, weighted=False)
    # each node knows its SSSP estimate to every leader
    ridx, rdist = _argmin_rows(dhat, [net.ids[r] for r in R])
    flags = []
    with net.phase("leader_broadcast"):
        recs = {v: [(net.ids[R[int(ridx[v])]], int(rdist[v]))] for v in range(n) if math.isfinite(rdist[v])}
        got = _broadcast_records(net, recs, [_id_width(net), _dist_width(g)])
    cw = np.zeros(n, dtype=int)
    dw = np.zeros(n)
    row_of = {r: i for i, r in enumerate(R)}
    for v in range(n):
        lid, d = got[net.ids[v]][0]
        cw[v] = row_of[net.index[lid]]
        dw[v] = d
    far = dhat[cw].T + dw[None, :]  # far[v, w] = d̂(v, c_w) + d(w, c_w)
    est = np.where(np.isfinite(near), near, far)
    stats = {"nq": nq, "x": x, "leaders": len(R)}
    stretch = 1 + 3 * eps + eps * eps
    return DistanceEstimate(list(range(n)), list(range(n)), est, stretch, eps, net.round - start, flags, stats)


def apsp_unweighted_eps(net: HybridNetwork, eps: float = 0.5) -> DistanceEstimate:
    """Stretch 1+ε by running :func:`apsp_unweighted` with ε/4."""
    res = apsp_unweighted(net, eps / 4)
    res.stretch = 1 + eps
    res.eps = eps
    return res


def _spanner_broadcast(net, sp: Spanner) -> dict:
    """Publish spanner edges from their lower-id endpoint; returns the edge
    map every node rebuilt (graph indices)."""
    recs = defaultdict(list)
    for (u, v), w in sp.edges.items():
        a, b = (u, v) if net.ids[u] < net.ids[v] else (v, u)
        recs[a].append((net.ids[b], w))
    got = _broadcast_records(net, dict(recs), [_id_width(net), max(1, max(sp.edges.values(), default=1).bit_length())])
    edges = {}
    for origin, lst in got.items():
        a = net.index[origin]
        for bid, w in lst:
            b = net.index[bid]
            edges[(min(a, b), max(a, b))] = w
    if edges != sp.edges:
        raise AssertionError("spanner broadcast lost edges")
    return edges


def apsp_weighted_spanner(net: HybridNetwork, eps: float = 0.5, seed: int = 0) -> DistanceEstimate:
    """Stretch 2⌈ε·log2 n/2⌉-1: build a spanner, broadcast its edges, and
    let every node run Dijkstra on it."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    g, n = net.g, net.n
    start = net.round
    kappa = max(1, math.ceil(eps * math.log2(max(n, 2)) / 2))
    flags = []
    if kappa == 1:
        flags.append("kappa = 1: the spanner is the whole graph")
    sp = build_spanner(g, kappa, seed)
    with net.phase("spanner"):
        net.idle(sp.rounds, 2 * g.m, 2 * g.m * net.lg)
    with net.phase("spanner_broadcast"):
        edges = _spanner_broadcast(net, sp) if sp.edges else {}
    adj = _adjacency(edges)
    est = np.full((n, n), np.inf)
    for v in range(n):
        for u, d in _dijkstra(adj, v).items():
            est[v, u] = d
    stats = {"kappa": kappa, "spanner_edges": sp.edge_count, "size_bound": sp.size_bound}
    return DistanceEstimate(list(range(n)), list(range(n)), est, 2 * kappa - 1, eps, net.round - start, flags + sp.flags, stats)


def apsp_weighted_skeleton(net: HybridNetwork, alpha: int = 1, xi: float = XI, seed: int = 0) -> DistanceEstimate:
    """Stretch 4α-1 via a skeleton with sampling probability 1/t,
    t = n^(1/(3α+1))·NQ_n^(2/(3+1/α)), whose (2α-1)-spanner is broadcast.

    δ(v, w) = min{d^h(v, w), d^h(v, v_s) + d̂(v_s, w_s) + d^h(w_s, w)} with
    v_s the skeleton node closest to v within h hops.
    """
    if alpha < 1 or int(alpha) != alpha:
        raise ValueError("alpha must be an integer >= 1")
    alpha = int(alpha)
    g, n = net.g, net.n
    start = net.round
    _broadcast_ids(net)
    nq = nq_graph(g, n, "distributed", net).value
    t = n ** (1 / (3 * alpha + 1)) * nq ** (2 / (3 + 1 / alpha))
    x = min(float(n), max(1.0, t))
    sk = build_skeleton(net, x, xi)
    sp = build_spanner(sk, alpha, seed)
    with net.phase("skeleton_spanner"):
        net.idle(sp.rounds * sk.h)
    with net.phase("spanner_broadcast"):
        edges = _spanner_broadcast(net, sp) if sp.edges else {}
    adj = _adjacency(edges)
    S = sk.nodes
    dhat = np.full((len(S), len(S)), np.inf)
    pos = sk.position
    for i, u in enumerate(S):
        for w, d in _dijkstra(adj, u).items():
            dhat[i, pos[w]] = d
    vs, dvs = _argmin_rows(sk.dist_h, [net.ids[u] for u in S])
    flags = list(sk.flags) + list(sp.flags)
    have = np.isfinite(dvs)
    if not have.all():
        flags.append(f"{int((~have).sum())} nodes see no skeleton node within h hops")
    with net.phase("proxy_broadcast"):
        recs = {v: [(net.ids[S[int(vs[v])]], int(dvs[v]))] for v in range(n) if have[v]}
        got = _broadcast_records(net, recs, [_id_width(net), _dist_width(g)])
    proxy = np.full(n, -1)
    dp = np.full(n, np.inf)
    for v in range(n):
        if net.ids[v] in got:
            pid, d = got[net.ids[v]][0]
            proxy[v] = pos[net.index[pid]]
            dp[v] = d
    dh, _ = _relax(g, range(n), sk.h)
    via = np.full((n, n), np.inf)
    ok = proxy >= 0
    if ok.any():
        sub = dhat[np.ix_(proxy[ok], proxy[ok])]
        via[np.ix_(ok, ok)] = dp[ok][:, None] + sub + dp[ok][None, :]
    est = np.minimum(dh, via)
    stats = {"t": t, "h": sk.h, "skeleton_nodes": len(S), "spanner_edges": sp.edge_count, "nq": nq}
    return DistanceEstimate(list(range(n)), list(range(n)), est, 4 * alpha - 1, None, net.round - start, flags, stats)
