"""Minor aggregation, forest decomposition, cycle orientation, network
decomposition and the Eulerian-orientation oracle with virtual nodes.

Edge lists here are plain lists of (u, v) pairs and may contain parallel
edges; an edge is identified by its position in the list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dissemination import TokenSet, k_disseminate
from .graphcore import Graph, hop_matrix, log2ceil
from .hybridnet import HybridNetwork, payload_bits
from .overlay import _forest_aggregate, build_virtual_tree, component_forest, tree_aggregate_broadcast

__all__ = [
    "Orientation",
    "MinorRoundSpec",
    "MinorRoundResult",
    "VirtualNodeSet",
    "NetworkDecomposition",
    "ArboricityError",
    "OddDegreeError",
    "minor_round",
    "minor_round_reference",
    "forest_decomposition",
    "orient_cycles",
    "network_decomposition",
    "check_decomposition",
    "eulerian_orientation",
    "OPERATORS",
    "C_F",
    "C_CHI",
    "C_V",
]

C_F = 4
C_CHI = 4
C_V = 1

OPERATORS = {
    "min": min,
    "max": max,
    "sum": lambda a, b: a + b,
    "or": lambda a, b: a | b,
    "and": lambda a, b: a & b,
    "xor": lambda a, b: a ^ b,
}


class ArboricityError(ValueError):
    """The peeling stalled: the graph is denser than the promised bound."""

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


class OddDegreeError(ValueError):
    def __init__(self, node, degree):
        super().__init__(f"{node} has odd degree {degree}; no Eulerian orientation exists")
        self.node = node
        self.degree = degree


@dataclass
class Orientation:
    """One direction per input edge: edge i points from its tail to heads[i]."""

    edges: list
    heads: list
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.heads) != len(self.edges):
            raise ValueError("one head per edge is required")
        for (u, v), h in zip(self.edges, self.heads):
            if h != u and h != v:
                raise ValueError(f"head {h!r} is not an endpoint of edge ({u!r}, {v!r})")

    def arcs(self):
        return [(v if h == u else u, h) for (u, v), h in zip(self.edges, self.heads)]

    def indegree(self) -> dict:
        deg = {}
        for u, v in self.edges:
            deg.setdefault(u, 0)
            deg.setdefault(v, 0)
        for _, h in self.arcs():
            deg[h] += 1
        return deg

    def outdegree(self) -> dict:
        deg = {}
        for u, v in self.edges:
            deg.setdefault(u, 0)
            deg.setdefault(v, 0)
        for t, _ in self.arcs():
            deg[t] += 1
        return deg

    def imbalance(self) -> int:
        """Σ_v |in(v) - out(v)|."""
        i, o = self.indegree(), self.outdegree()
        return sum(abs(i[v] - o[v]) for v in i)

    def is_eulerian(self) -> bool:
        return self.imbalance() == 0

    def max_outdegree(self) -> int:
        return max(self.outdegree().values(), default=0)

    def to_edge_list(self) -> str:
        lines = ["tail,head"]
        for t, h in self.arcs():
            lines.append(f"{_label(t)},{_label(h)}")
        return "\n".join(lines) + "\n"


def _label(x):
    if isinstance(x, tuple):
        return ":".join(str(p) for p in x)
    return str(x)


def _op(op):
    return OPERATORS[op] if isinstance(op, str) else op


# minor aggregation


@dataclass
class MinorRoundSpec:
    """One round of the minor-aggregation model on a graph.

    ``contract`` holds the ⊤ edges (sorted index pairs, or a set of them);
    all other edges are ⊥. ``propose(u, v, y_u, y_v)`` returns the pair
    (z for u's side, z for v's side) of an inter-supernode edge and defaults
    to handing each side the other side's consensus value.
    """

    contract: set
    x: list
    consensus: object = "min"
    aggregate: object = "min"
    propose: object = None

    def __post_init__(self):
        self.contract = {(min(u, v), max(u, v)) for u, v in self.contract}

    def z(self, u, v, yu, yv):
        if self.propose is None:
            return yv, yu
        return self.propose(u, v, yu, yv)


@dataclass
class MinorRoundResult:
    supernode: list
    y: list
    agg: list
    rounds: int = 0
    stats: dict = field(default_factory=dict)


def minor_round_reference(g: Graph, spec: MinorRoundSpec):
    """Centralized evaluation: (supernode, y, edge aggregate) per node."""
    n = g.n
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in spec.contract:
        parent[find(u)] = find(v)
    root = [find(v) for v in range(n)]
    cons, agg_op = _op(spec.consensus), _op(spec.aggregate)
    y_of = {}
    for v in range(n):
        r = root[v]
        y_of[r] = spec.x[v] if r not in y_of else cons(y_of[r], spec.x[v])
    agg_of = {}
    for u, v in g.edges():
        if root[u] == root[v]:
            continue
        zu, zv = spec.z(u, v, y_of[root[u]], y_of[root[v]])
        for side, z in ((root[u], zu), (root[v], zv)):
            agg_of[side] = z if side not in agg_of else agg_op(agg_of[side], z)
    # label supernodes by their largest member id, as the in-model run does
    label = {}
    for v in range(n):
        label[root[v]] = max(label.get(root[v], g.node_ids[v]), g.node_ids[v])
    return (
        [label[root[v]] for v in range(n)],
        [y_of[root[v]] for v in range(n)],
        [agg_of.get(root[v]) for v in range(n)],
    )


def minor_round(net: HybridNetwork, spec: MinorRoundSpec) -> MinorRoundResult:
    """Simulate one minor-aggregation round in-model.

    Each supernode gets a constant-degree overlay tree built from its ⊤
    edges; consensus is an aggregation on that tree. Every ⊥ edge is then
    simulated by both endpoints, which swap (supernode, y) over the local
    edge, evaluate their side's proposal and fold it into a second tree
    aggregation with ⊗. ⊥ edges inside one supernode are self-loops and
    are dropped.
    """
    g, n = net.g, net.n
    if len(spec.x) != n:
        raise ValueError("one input value per node is required")
    for u, v in spec.contract:
        if v not in g.adjacency[u]:
            raise ValueError(f"contracted pair ({u}, {v}) is not an edge")
    limit = net.cfg.global_msg_size
    for v, x in enumerate(spec.x):
        if payload_bits((x,)) > limit:
            raise ValueError(f"value at node {net.ids[v]} needs more than the {limit}-bit message size")
    cons, agg_op = _op(spec.consensus), _op(spec.aggregate)
    start = net.round
    with net.phase("minor_round"):
        allowed = lambda a, b: (min(a, b), max(a, b)) in spec.contract
        parent, children, comp, depth_bound = component_forest(net, allowed)
        y = _forest_aggregate(net, parent, children, list(spec.x), cons, depth_bound)
        for v in range(n):
            for u in g.adjacency[v]:
                net.send_local(v, u, (comp[v], y[v]))
        l_in, _ = net.advance()
        part = [None] * n
        for v in range(n):
            for u, (cu, yu) in l_in[v]:
                if cu == comp[v]:
                    continue
                a, b = (v, u) if v < u else (u, v)
                za, zb = spec.z(a, b, y[a] if a == v else yu, y[b] if b == v else yu)
                z = za if a == v else zb
                part[v] = z if part[v] is None else agg_op(part[v], z)
        agg = _forest_aggregate(net, parent, children, part, agg_op, depth_bound)
    return MinorRoundResult(comp, y, agg, net.round - start, {"depth_bound": depth_bound})


# forest decomposition


def forest_decomposition(edges, alpha: int, c_f: int = C_F, nodes=None, net: HybridNetwork | None = None) -> Orientation:
    """Out-orientation with outdegree ≤ c_f·α by layered peeling.

    Each layer removes every node whose remaining degree is at most c_f·α;
    edges point from the earlier layer to the later one, and inside a layer
    from the smaller to the larger node. With c_f ≥ 4 at least half of the
    remaining nodes leave per layer, so there are ≤ ⌈log2 n⌉+1 layers.
    ``edges`` may be a Graph or an edge list over hashable nodes.
    """
    if isinstance(edges, Graph):
        nodes = range(edges.n) if nodes is None else nodes
        edges = edges.edges()
    edges = list(edges)
    if alpha < 1:
        raise ValueError("arboricity bound must be at least 1")
    t = c_f * alpha
    inc: dict = {v: [] for v in (nodes or ())}
    for i, (u, v) in enumerate(edges):
        inc.setdefault(u, []).append(i)
        inc.setdefault(v, []).append(i)
    deg = {v: len(es) + sum(1 for i in es if edges[i][0] == edges[i][1]) for v, es in inc.items()}
    order = {v: r for r, v in enumerate(sorted(inc, key=_sort_key))}
    layer = {}
    alive = set(inc)
    rounds = 0
    while alive:
        rounds += 1
        peel = [v for v in alive if deg[v] <= t]
        if not peel:
            sub_m = sum(1 for u, v in edges if u in alive and v in alive)
            witness = {
                "nodes": len(alive),
                "edges": sub_m,
                "min_degree": min(deg[v] for v in alive),
                "arboricity_at_least": math.ceil(sub_m / max(1, len(alive) - 1)),
            }
            raise ArboricityError(
                f"no node of degree <= {t} among {len(alive)} remaining; "
                f"arboricity is at least {witness['arboricity_at_least']} > {alpha}",
                witness,
            )
        for v in peel:
            layer[v] = rounds
        for v in peel:
            alive.discard(v)
        for v in peel:
            for i in inc[v]:
                a, b = edges[i]
                w = b if a == v else a
                if w in alive:
                    deg[w] -= 1
    heads = []
    for u, v in edges:
        ku, kv = (layer[u], order[u]), (layer[v], order[v])
        heads.append(v if ku <= kv else u)
    if net is not None:
        net.idle(rounds, local_msgs=2 * len(edges))
    out = Orientation(edges, heads, {"layers": rounds, "threshold": t})
    out.stats["max_outdegree"] = out.max_outdegree()
    return out


def _sort_key(v):
    return (0, v, ()) if isinstance(v, int) else (1, 0, tuple(map(str, v)) if isinstance(v, tuple) else (str(v),))


# cycle orientation


def _reduce_colors(color, nbrs, active):
    """One bit-trick reduction on undirected paths and cycles.

    A node records, for each neighbour, the lowest bit where their colours
    differ together with its own bit there; the unordered pair of these
    records is the new colour. Adjacent nodes always differ.
    """
    new = {}
    for v in active:
        recs = []
        for u in nbrs[v]:
            diff = color[v] ^ color[u]
            i = (diff & -diff).bit_length() - 1
            recs.append(2 * i + ((color[v] >> i) & 1))
        p, q = min(recs), max(recs)
        new[v] = q * (q + 1) // 2 + p
    return new


def _cycle_mis(active, nbrs, ident):
    """Maximal independent set of disjoint cycles of length ≥ 4 and the
    number of synchronous rounds used."""
    color = {v: ident[v] for v in active}
    rounds = 0
    width = max((c.bit_length() for c in color.values()), default=1)
    while True:
        new = _reduce_colors(color, nbrs, active)
        new_width = max((c.bit_length() for c in new.values()), default=1)
        if new_width >= width:
            break
        color, width = new, new_width
        rounds += 1
    palette = 1 << width
    for c in range(palette - 1, 2, -1):
        movers = [v for v in active if color[v] == c]
        for v in movers:
            used = {color[u] for u in nbrs[v]}
            color[v] = min(x for x in range(3) if x not in used)
        rounds += 1
    mis = set()
    for c in range(3):
        for v in active:
            if color[v] == c and not any(u in mis for u in nbrs[v]):
                mis.add(v)
        rounds += 1
    return mis, rounds


def orient_cycles(h2, net: HybridNetwork | None = None, load: int = 1, max_iterations: int | None = None) -> Orientation:
    """Consistently orient a 2-regular multigraph given as an edge list.

    Cycles longer than three repeatedly lose a maximal independent set: a
    removed node joins its two neighbours by a new edge standing for the
    path through it. Cycles of length ≤ 3 (detected two hops out) are
    walked directly, then contractions are undone in reverse, which fixes
    the direction of every original edge. ``load`` is the number of
    network rounds charged per simulated round when ``net`` is given.
    """
    edges = list(h2)
    inc: dict = {}
    ident: dict = {}
    for i, (u, v) in enumerate(edges):
        for w in (u, v):
            inc.setdefault(w, []).append(i)
            if w not in ident:
                ident[w] = len(ident)
    for w, es in inc.items():
        if len(es) != 2:
            raise ValueError(f"node {w!r} has degree {len(es)}, expected 2")
    # super-edges: sid -> (a, b, payload)
    sup = {i: (u, v, ("leaf", i)) for i, (u, v) in enumerate(edges)}
    slot = {w: list(es) for w, es in inc.items()}
    nxt_sid = len(edges)

    def other(s, w):
        a, b, _ = sup[s]
        return b if a == w else a

    def neighbours(w):
        return [other(s, w) for s in slot[w]]

    def small(w):
        a, b = neighbours(w)
        return a == w or a == b or b in neighbours(a)

    nodes = set(slot)
    sizes = []
    shrink = []
    iterations = 0
    sim_rounds = 0
    limit = max_iterations if max_iterations is not None else 4 * log2ceil(max(2, len(nodes))) + 4
    while True:
        active = sorted((w for w in nodes if not small(w)), key=lambda w: ident[w])
        sim_rounds += 2
        if not active:
            break
        if iterations >= limit:
            raise RuntimeError(f"cycle contraction did not finish in {limit} iterations")
        iterations += 1
        nb = {w: neighbours(w) for w in active}
        mis, r = _cycle_mis(active, nb, ident)
        sim_rounds += r + 1
        for w in sorted(mis, key=lambda x: ident[x]):
            s1, s2 = slot[w]
            u, x = other(s1, w), other(s2, w)
            sid = nxt_sid
            nxt_sid += 1
            sup[sid] = (u, x, ("join", s1, w, s2))
            slot[u][slot[u].index(s1)] = sid
            slot[x][slot[x].index(s2)] = sid
            nodes.discard(w)
            del slot[w]
        sizes.append(len(active))
        after = sum(1 for w in active if w not in mis)
        shrink.append(after / len(active))
    heads = [None] * len(edges)

    def fix(s, tail, head):
        stack = [(s, tail, head)]
        while stack:
            s, tail, head = stack.pop()
            a, b, pay = sup[s]
            if pay[0] == "leaf":
                heads[pay[1]] = head
                continue
            _, s1, mid, s2 = pay
            if tail == a:
                stack.append((s1, a, mid))
                stack.append((s2, mid, b))
            else:
                stack.append((s2, b, mid))
                stack.append((s1, mid, a))

    done = set()
    for w in sorted(nodes, key=lambda x: ident[x]):
        s = slot[w][0]
        if s in done:
            continue
        cur = w
        while True:
            nxt = other(s, cur)
            done.add(s)
            fix(s, cur, nxt)
            rest = [t for t in slot[nxt] if t != s]
            if not rest or rest[0] in done:
                break
            cur, s = nxt, rest[0]
    sim_rounds += 3 + iterations
    if net is not None:
        net.idle(sim_rounds * max(1, load), local_msgs=2 * len(edges))
    stats = {
        "iterations": iterations,
        "sizes": sizes,
        "shrink": shrink,
        "max_shrink": max(shrink, default=0.0),
        "simulated_rounds": sim_rounds,
    }
    return Orientation(edges, heads, stats)


# network decomposition


@dataclass
class NetworkDecomposition:
    """Clusters with colours; cluster ids index ``centers`` and ``color``."""

    power: int
    cluster_of: list
    centers: list
    color: list
    diameter_bound: int
    rounds: int = 0
    flags: list = field(default_factory=list)

    @property
    def colors(self) -> int:
        return max(self.color) + 1 if self.color else 0

    def members(self) -> list:
        out = [[] for _ in self.centers]
        for v, c in enumerate(self.cluster_of):
            out[c].append(v)
        return out

    def by_color(self) -> list:
        out = [[] for _ in range(self.colors)]
        for c, col in enumerate(self.color):
            out[col].append(c)
        return out


def network_decomposition(
    g: Graph,
    power: int = 1,
    c_chi: int = C_CHI,
    diameter_bound: int | None = None,
    seed: int = 0,
    beta: float = 0.5,
    net: HybridNetwork | None = None,
) -> NetworkDecomposition:
    """Coloured low-diameter clustering of G or G² by shifted ball carving.

    Per colour, every uncoloured node draws a shift δ ~ Exp(β) capped at R
    (half the diameter bound, in power-graph hops) and each uncoloured node
    joins the centre maximising δ_c - dist(u, c). Only nodes that win by a
    margin of at least 2 are coloured; two such nodes adjacent in the power
    graph always share a centre, so same-coloured clusters are never
    adjacent there. A graph whose diameter fits the bound is one cluster.
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    n = g.n
    lg = max(1, log2ceil(n))
    R = 2 * lg if diameter_bound is None else max(1, diameter_bound // 2)
    bound = 2 * R
    hops = hop_matrix(g).astype(np.int64)
    dist = -(-hops // power)
    rng = np.random.default_rng(seed)
    flags = []
    rounds = 0
    if int(dist.max()) <= bound:
        rounds = int(hops.max()) + 1
        if net is not None:
            net.idle(rounds, local_msgs=2 * g.m)
        return NetworkDecomposition(power, [0] * n, [int(np.argmax(g.node_ids))], [0], bound, rounds, flags)
    cluster_of = [-1] * n
    centers, color = [], []
    remaining = np.arange(n)
    phase = 0
    while remaining.size:
        delta = np.minimum(rng.exponential(1.0 / beta, size=remaining.size), R)
        vals = delta[None, :] - dist[np.ix_(remaining, remaining)]
        best = np.argmax(vals, axis=1)
        top = vals[np.arange(remaining.size), best]
        if remaining.size > 1:
            masked = vals.copy()
            masked[np.arange(remaining.size), best] = -np.inf
            second = masked.max(axis=1)
        else:
            second = np.full(1, -np.inf)
        interior = top - second >= 2
        index_of = {}
        for i in np.flatnonzero(interior):
            c = int(remaining[best[i]])
            if c not in index_of:
                index_of[c] = len(centers)
                centers.append(c)
                color.append(phase)
            cluster_of[int(remaining[i])] = index_of[c]
        remaining = remaining[~interior]
        rounds += R * power + 1
        phase += 1
    if phase > c_chi * lg:
        flags.append(f"colors {phase} exceed {c_chi}·log2 n = {c_chi * lg}")
    if net is not None:
        net.idle(rounds, local_msgs=2 * g.m)
    return NetworkDecomposition(power, cluster_of, centers, color, bound, rounds, flags)


def check_decomposition(g: Graph, nd: NetworkDecomposition) -> dict:
    """Oracle check: weak diameters (in power-graph hops) and the minimum
    G-distance between distinct same-coloured clusters."""
    hops = hop_matrix(g).astype(np.int64)
    dist = -(-hops // nd.power)
    members = nd.members()
    weak = 0
    for mem in members:
        if len(mem) > 1:
            weak = max(weak, int(dist[np.ix_(mem, mem)].max()))
    gap = math.inf
    for group in nd.by_color():
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                if members[a] and members[b]:
                    gap = min(gap, int(hops[np.ix_(members[a], members[b])].min()))
    return {
        "weak_diameter": weak,
        "within_bound": weak <= nd.diameter_bound,
        "min_same_color_gap": gap,
        "separated": gap > nd.power,
        "colors": nd.colors,
    }


# Eulerian orientation


@dataclass
class VirtualNodeSet:
    """Virtual nodes 0..count-1 with edges to real nodes and among themselves.

    Virtual nodes appear as ("v", i) in orientations.
    """

    count: int
    real_edges: list = field(default_factory=list)
    virtual_edges: list = field(default_factory=list)

    def __post_init__(self):
        for a, r in self.real_edges:
            if not 0 <= a < self.count:
                raise ValueError(f"virtual node {a} out of range")
        for a, b in self.virtual_edges:
            if not (0 <= a < self.count and 0 <= b < self.count):
                raise ValueError(f"virtual edge ({a}, {b}) out of range")
            if a == b:
                raise ValueError(f"self-loop at virtual node {a}")

    def check(self, n: int, c_v: int = C_V):
        cap = c_v * log2ceil(n) ** 2
        if self.count > max(1, cap):
            raise ValueError(f"{self.count} virtual nodes exceed c_v·log² n = {cap}")
        for _, r in self.real_edges:
            if not 0 <= r < n:
                raise ValueError(f"real endpoint {r} out of range")


def _find_cycle(adj, edges, alive):
    """A cycle of the multigraph restricted to ``alive`` edges as a list of
    (edge, tail, head), or None."""
    seen_node = {}
    for s in sorted(adj):
        if s in seen_node:
            continue
        seen_node[s] = None
        stack = [(s, None, iter(adj[s]))]
        path = {s: (None, None)}
        while stack:
            v, via, it = stack[-1]
            for i in it:
                if i == via or i not in alive:
                    continue
                a, b = edges[i]
                w = b if a == v else a
                if w in path:
                    cyc = [(i, v, w)]
                    x = v
                    while x != w:
                        pe, px = path[x]
                        cyc.append((pe, px, x))
                        x = px
                    # orient consistently: w -> ... -> v -> w
                    return [(e, t, h) for e, t, h in reversed(cyc[1:])] + [cyc[0]]
                if w in seen_node:
                    continue
                seen_node[w] = None
                path[w] = (i, v)
                stack.append((w, i, iter(adj[w])))
                break
            else:
                stack.pop()
                path.pop(v, None)
    return None


def eulerian_orientation(
    net: HybridNetwork,
    H,
    virtuals: VirtualNodeSet | None = None,
    c_f: int = C_F,
    c_chi: int = C_CHI,
    c_v: int = C_V,
) -> Orientation:
    """Orient H (real edges of G plus virtual edges) with in = out everywhere.

    1. Colour a decomposition of G²; per colour, every extended cluster
       (cluster plus neighbours) orients and drops cycles of H until its
       remaining edges form a forest. Extended clusters of one colour are
       disjoint, so the work is parallel within a colour.
    2. Virtual node v pairs its real neighbours by ascending id into
       ⌊|S_v|/2⌋ degree-2 nodes; the residual keeps the rest.
    3. An out-orientation of low outdegree on the remainder assigns every
       split degree-2 node to a simulating real node; the split graph is a
       union of cycles, which orient_cycles orients.
    """
    g = net.g
    virtuals = virtuals or VirtualNodeSet(0)
    virtuals.check(g.n, c_v)
    real = [(int(u), int(v)) for u, v in H]
    for u, v in real:
        if v not in g.adjacency[u]:
            raise ValueError(f"({u}, {v}) is not an edge of the network")
    V = lambda i: ("v", i)
    edges = list(real)
    edges += [(V(a), r) for a, r in virtuals.real_edges]
    edges += [(V(a), V(b)) for a, b in virtuals.virtual_edges]
    deg: dict = {}
    for u, v in edges:
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    for w in sorted(deg, key=_sort_key):
        if deg[w] % 2:
            name = f"virtual node {w[1]}" if isinstance(w, tuple) else f"node {net.ids[w]}"
            raise OddDegreeError(name, deg[w])
    heads = [None] * len(edges)
    start = net.round
    stats: dict = {}
    with net.phase("euler"):
        # 1. greedy cycle removal per colour class on extended clusters
        nd = network_decomposition(g, power=2, c_chi=c_chi, seed=net.seed, net=net)
        members = nd.members()
        alive = set(range(len(real)))
        forest_ok = True
        for group in nd.by_color():
            for c in group:
                ext = set(members[c])
                for v in members[c]:
                    ext.update(g.adjacency[v])
                local = [i for i in alive if real[i][0] in ext and real[i][1] in ext]
                adj: dict = {}
                for i in local:
                    a, b = real[i]
                    adj.setdefault(a, []).append(i)
                    adj.setdefault(b, []).append(i)
                live = set(local)
                while True:
                    cyc = _find_cycle(adj, real, live)
                    if cyc is None:
                        break
                    for e, t, h in cyc:
                        heads[e] = h
                        live.discard(e)
                        alive.discard(e)
                forest_ok = forest_ok and _is_forest(real, live)
            net.idle(nd.diameter_bound * 2 + 2, local_msgs=2 * len(real))
        stats["colors"] = nd.colors
        stats["forest_witness"] = forest_ok
        stats["residual_real_edges"] = len(alive)
        # 2. split virtual nodes by ascending neighbour id
        offset = len(real)
        endpoint = {}
        for j, (a, r) in enumerate(virtuals.real_edges):
            endpoint[offset + j] = [V(a), r]
        by_virtual: dict = {}
        for j, (a, r) in enumerate(virtuals.real_edges):
            by_virtual.setdefault(a, []).append((net.ids[r], offset + j))
        for a, lst in by_virtual.items():
            lst.sort()
            for p in range(len(lst) // 2):
                for _, e in lst[2 * p: 2 * p + 2]:
                    endpoint[e][0] = ("s", a, p)
        for j, (a, b) in enumerate(virtuals.virtual_edges):
            endpoint[offset + len(virtuals.real_edges) + j] = [V(a), V(b)]
        for i in alive:
            endpoint[i] = list(real[i])
        rest = sorted(endpoint)
        depth = max(1, log2ceil(g.n))
        if virtuals.count:
            net.idle(4 * depth, local_msgs=len(virtuals.real_edges))
        # residual virtual edges to real nodes are broadcast once
        diss_rounds = 0
        tokens, placement = {}, {}
        for e in rest:
            a, b = endpoint[e]
            if isinstance(a, tuple) and a[0] == "v" and isinstance(b, int):
                tid = (net.ids[b], len(placement.get(b, [])))
                tokens[tid] = a[1]
                placement.setdefault(b, []).append(tid)
        if tokens:
            before = net.round
            ts = TokenSet(tokens, placement)
            res = k_disseminate(net, ts)
            if not res.complete(ts.all_items()):
                raise RuntimeError("broadcast of residual virtual edges was incomplete")
            diss_rounds = net.round - before
        # 3. low-outdegree orientation assigns split nodes to simulators
        sub = [tuple(endpoint[e]) for e in rest]
        alpha = max(1, nd.colors + 2 * virtuals.count + 1)
        fo = forest_decomposition(sub, alpha, c_f, net=net)
        fo_head = dict(zip(rest, fo.heads))
        inc: dict = {}
        for e in rest:
            for w in endpoint[e]:
                inc.setdefault(w, []).append(e)
        star = {}
        load: dict = {}
        for w in sorted(inc, key=_sort_key):
            es = sorted(inc[w], key=lambda e: (fo_head[e] != w, e))
            for p in range(len(es) // 2):
                node = ("x", w, p)
                pair = es[2 * p: 2 * p + 2]
                sim = None
                for e in pair:
                    a, b = endpoint[e]
                    o = b if a == w else a
                    if fo_head[e] == w and isinstance(o, int):
                        sim = o
                        break
                if sim is None:
                    if isinstance(w, int):
                        sim = w
                    else:
                        cand = [o for e in pair for o in endpoint[e] if isinstance(o, int)]
                        sim = min(cand) if cand else "all"
                load[sim] = load.get(sim, 0) + 1
                for e in pair:
                    star.setdefault(e, []).append((w, node))
        h2 = []
        for e in rest:
            side = dict(star[e])
            h2.append((side[endpoint[e][0]], side[endpoint[e][1]]))
        real_load = max((c for s, c in load.items() if s != "all"), default=1)
        # a round of a residual virtual node is one aggregate-and-broadcast
        relay = 0
        if any(isinstance(w, tuple) and w[0] == "v" for w in inc):
            tree = build_virtual_tree(net)
            before = net.round
            tree_aggregate_broadcast(net, tree, {v: 0 for v in tree.members}, max)
            relay = net.round - before
        factor = real_load + relay
        stats["simulation_load"] = real_load
        stats["residual_broadcast_rounds"] = diss_rounds
        stats["relay_rounds"] = relay
        oc = orient_cycles(h2, net=net, load=factor)
        node_of = {}
        for e in rest:
            for w, x in star[e]:
                node_of[x] = w
        for e, hx in zip(rest, oc.heads):
            hw = node_of[hx]
            # endpoint[e] lists the edge's ends in input order
            heads[e] = edges[e][endpoint[e].index(hw)]
        stats["cycle_iterations"] = oc.stats["iterations"]
        stats["max_shrink"] = oc.stats["max_shrink"]
    out = Orientation(edges, heads, stats)
    out.stats["rounds"] = net.round - start
    if not out.is_eulerian():
        raise AssertionError("orientation is not balanced")
    return out


def _is_forest(edges, live) -> bool:
    parent: dict = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in live:
        a, b = edges[i]
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True
