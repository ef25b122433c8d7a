"""Graphs, deterministic generators, centralized distance oracles and the
adversarial weight construction.

Everything in this module is centralized ground truth. The in-model
algorithms elsewhere in the package never call the oracles; tests compare
their outputs against them.
"""
from __future__ import annotations

import csv
import io
import math
import random
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra, shortest_path

__all__ = [
    "ConfigurationError",
    "Graph",
    "DistanceTable",
    "HardInstance",
    "generate",
    "path",
    "cycle",
    "grid",
    "star",
    "complete",
    "erdos_renyi",
    "random_tree",
    "with_random_weights",
    "with_random_ids",
    "ball",
    "bfs_hops",
    "hop_matrix",
    "eccentricity",
    "diameter",
    "oracle_distances",
    "hard_instance",
    "read_graph",
    "write_graph",
    "log2ceil",
]


class ConfigurationError(ValueError):
    """Invalid parameters for a generator, model or experiment."""


def log2ceil(n: int) -> int:
    """⌈log2 n⌉ clamped to at least 1 so that caps and bounds never vanish."""
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


def _edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class Graph:
    """Undirected connected graph on nodes 0..n-1.

    ``weights`` maps the sorted pair (u, v) to a positive integer; ``None``
    means unweighted, every edge then has weight 1. ``node_ids`` are the
    identifiers the distributed model sees; by default they equal the index.
    """

    __slots__ = ("n", "adjacency", "weights", "node_ids", "meta", "_csr", "_hops")

    def __init__(self, n, edges, weights=None, node_ids=None, meta=None, validate=True):
        if n < 1:
            raise ConfigurationError("a graph needs at least one node")
        adj = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise ConfigurationError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ConfigurationError(f"edge ({u}, {v}) out of range")
            adj[u].add(v)
            adj[v].add(u)
        self.n = n
        self.adjacency = tuple(tuple(sorted(a)) for a in adj)
        if weights is not None:
            weights = {_edge_key(u, v): int(w) for (u, v), w in weights.items()}
            for e in self.edges():
                w = weights.get(e)
                if w is None or w < 1:
                    raise ConfigurationError(f"edge {e} needs a positive integer weight")
        self.weights = weights
        self.node_ids = tuple(node_ids) if node_ids is not None else tuple(range(n))
        self.meta = dict(meta or {})
        self._csr = None
        self._hops = None
        if validate:
            if len(set(self.node_ids)) != n:
                raise ConfigurationError("node ids must be pairwise distinct")
            if not self.is_connected():
                raise ConfigurationError("graph is not connected")

    # basic accessors

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def max_degree(self) -> int:
        return max(len(a) for a in self.adjacency)

    def edges(self):
        """Each undirected edge once as (u, v) with u < v, in sorted order."""
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @property
    def m(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    @property
    def weighted(self) -> bool:
        return self.weights is not None

    def weight(self, u: int, v: int) -> int:
        if self.weights is None:
            return 1
        return self.weights[_edge_key(u, v)]

    def max_weight(self) -> int:
        return max(self.weights.values()) if self.weights else 1

    def is_connected(self) -> bool:
        seen = bfs_hops(self, 0)
        return all(d >= 0 for d in seen)

    def with_weights(self, weights) -> "Graph":
        return Graph(self.n, self.edges(), weights, self.node_ids, self.meta, validate=False)

    def with_node_ids(self, ids) -> "Graph":
        g = Graph(self.n, self.edges(), self.weights, ids, self.meta, validate=False)
        if len(set(g.node_ids)) != g.n:
            raise ConfigurationError("node ids must be pairwise distinct")
        return g

    def unweighted(self) -> "Graph":
        return Graph(self.n, self.edges(), None, self.node_ids, self.meta, validate=False)

    def csr(self, weighted=True) -> csr_matrix:
        if weighted and self.weights is not None:
            rows, cols, data = [], [], []
            for (u, v), w in self.weights.items():
                rows += [u, v]
                cols += [v, u]
                data += [w, w]
            return csr_matrix((data, (rows, cols)), shape=(self.n, self.n), dtype=np.float64)
        if self._csr is None:
            rows = [u for u in range(self.n) for _ in self.adjacency[u]]
            cols = [v for u in range(self.n) for v in self.adjacency[u]]
            self._csr = csr_matrix(
                (np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n), dtype=np.float64
            )
        return self._csr

    def __repr__(self):
        kind = self.meta.get("kind", "graph")
        return f"Graph({kind}, n={self.n}, m={self.m}, weighted={self.weighted})"


# generators


def path(n: int) -> Graph:
    if n < 1:
        raise ConfigurationError("path needs n >= 1")
    return Graph(n, [(i, i + 1) for i in range(n - 1)], meta={"kind": "path", "n": n})


def cycle(n: int) -> Graph:
    if n < 3:
        raise ConfigurationError("cycle needs n >= 3")
    return Graph(n, [(i, (i + 1) % n) for i in range(n)], meta={"kind": "cycle", "n": n})


def grid(d: int, m: int) -> Graph:
    """d-dimensional grid with side m (m**d nodes, L1 adjacency).

    Node index is the mixed-radix number of its coordinates, so node 0 is a
    corner.
    """
    if d < 1 or m < 2:
        raise ConfigurationError("grid needs d >= 1 and m >= 2")
    n = m**d
    edges = []
    for v in range(n):
        stride = 1
        for _ in range(d):
            if (v // stride) % m < m - 1:
                edges.append((v, v + stride))
            stride *= m
    return Graph(n, edges, meta={"kind": "grid", "d": d, "m": m})


def star(n: int) -> Graph:
    if n < 2:
        raise ConfigurationError("star needs n >= 2")
    return Graph(n, [(0, i) for i in range(1, n)], meta={"kind": "star", "n": n})


def complete(n: int) -> Graph:
    if n < 2:
        raise ConfigurationError("complete graph needs n >= 2")
    return Graph(
        n, [(u, v) for u in range(n) for v in range(u + 1, n)], meta={"kind": "complete", "n": n}
    )


def random_tree(n: int, seed: int) -> Graph:
    """Uniform random recursive tree: node i attaches to a uniform earlier node."""
    if n < 1:
        raise ConfigurationError("random_tree needs n >= 1")
    rng = random.Random(seed)
    edges = [(rng.randrange(i), i) for i in range(1, n)]
    return Graph(n, edges, meta={"kind": "random_tree", "n": n, "seed": seed})


def erdos_renyi(n: int, p: float, seed: int) -> Graph:
    """G(n, p) made connected by adding a random spanning tree when needed.

    ``meta["repaired"]`` records whether the repair fired.
    """
    if n < 1 or not (0 < p <= 1):
        raise ConfigurationError("erdos_renyi needs n >= 1 and p in (0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.size) < p
    edges = set(zip(iu[mask].tolist(), ju[mask].tolist()))
    probe = Graph(n, edges, validate=False)
    repaired = False
    if not probe.is_connected():
        repaired = True
        order = rng.permutation(n).tolist()
        for i in range(1, n):
            u, v = order[int(rng.integers(i))], order[i]
            edges.add(_edge_key(u, v))
    return Graph(
        n, sorted(edges), meta={"kind": "erdos_renyi", "n": n, "p": p, "seed": seed, "repaired": repaired}
    )


def generate(kind: str, params: dict | None = None, seed: int = 0) -> Graph:
    """Dispatch by name: path, cycle, grid, star, complete, erdos_renyi, random_tree."""
    params = dict(params or {})
    try:
        if kind == "path":
            return path(int(params["n"]))
        if kind == "cycle":
            return cycle(int(params["n"]))
        if kind == "grid":
            return grid(int(params.get("d", 2)), int(params["m"]))
        if kind == "star":
            return star(int(params["n"]))
        if kind == "complete":
            return complete(int(params["n"]))
        if kind == "erdos_renyi":
            return erdos_renyi(int(params["n"]), float(params["p"]), seed)
        if kind == "random_tree":
            return random_tree(int(params["n"]), seed)
    except KeyError as exc:
        raise ConfigurationError(f"{kind} is missing parameter {exc.args[0]}") from None
    raise ConfigurationError(f"unknown graph kind {kind!r}")


def with_random_weights(g: Graph, seed: int, max_weight: int | None = None, c_w: int = 3) -> Graph:
    """Independent uniform integer weights in [1, max_weight], default n**c_w."""
    if max_weight is None:
        max_weight = max(2, g.n**c_w)
    rng = np.random.default_rng(seed)
    edges = g.edges()
    ws = rng.integers(1, max_weight + 1, size=len(edges))
    out = g.with_weights(dict(zip(edges, ws.tolist())))
    out.meta.update(weights_seed=seed, max_weight=max_weight)
    return out


def with_random_ids(g: Graph, seed: int, c: int = 2) -> Graph:
    """Distinct identifiers drawn from [1, n**c] (the HYBRID0 id space)."""
    if c < 1:
        raise ConfigurationError("id exponent c must be >= 1")
    space = max(g.n, g.n**c)
    ids = random.Random(seed).sample(range(1, space + 1), g.n)
    out = g.with_node_ids(ids)
    out.meta.update(id_exponent=c)
    return out


# hop structure


def bfs_hops(g: Graph, src: int, limit: int | None = None) -> list[int]:
    """Hop distance from src to every node, -1 where unreached (or beyond limit)."""
    dist = [-1] * g.n
    dist[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        du = dist[u]
        if limit is not None and du >= limit:
            continue
        for w in g.adjacency[u]:
            if dist[w] < 0:
                dist[w] = du + 1
                q.append(w)
    return dist


def ball(g: Graph, v: int, t: int) -> set[int]:
    """All nodes within t hops of v, including v."""
    if not 0 <= v < g.n:
        raise KeyError(f"unknown node {v}")
    if t < 0:
        raise ValueError("radius must be non-negative")
    d = bfs_hops(g, v, limit=t)
    return {u for u, du in enumerate(d) if du >= 0}


def hop_matrix(g: Graph, rows=None, chunk: int = 512) -> np.ndarray:
    """Unweighted hop distances (int32), rows restricted to ``rows`` if given."""
    rows = list(range(g.n)) if rows is None else list(rows)
    out = np.empty((len(rows), g.n), dtype=np.int32)
    a = g.csr(weighted=False)
    for i in range(0, len(rows), chunk):
        part = rows[i : i + chunk]
        out[i : i + len(part)] = shortest_path(a, unweighted=True, indices=part, directed=False)
    return out


def eccentricity(g: Graph, v: int) -> int:
    return max(bfs_hops(g, v))


def diameter(g: Graph) -> int:
    if "diameter" in g.meta:
        return g.meta["diameter"]
    if g.n == 1:
        d = 0
    else:
        d = int(max(int(h.max()) for h in _hop_chunks(g)))
    g.meta["diameter"] = d
    return d


def _hop_chunks(g: Graph, chunk: int = 256):
    a = g.csr(weighted=False)
    for i in range(0, g.n, chunk):
        idx = list(range(i, min(g.n, i + chunk)))
        yield shortest_path(a, unweighted=True, indices=idx, directed=False)


# distance oracle


@dataclass
class DistanceTable:
    """Exact distances from each source: weighted, hop count and optional d^h."""

    sources: list[int]
    dist: np.ndarray
    hops: np.ndarray
    hop_limit: int | None = None
    dist_h: np.ndarray | None = None
    _row: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._row = {s: i for i, s in enumerate(self.sources)}

    def d(self, s: int, v: int) -> float:
        return self.dist[self._row[s], v]

    def hop(self, s: int, v: int) -> int:
        return int(self.hops[self._row[s], v])

    def d_h(self, s: int, v: int) -> float:
        if self.dist_h is None:
            raise ValueError("table was built without a hop limit")
        return self.dist_h[self._row[s], v]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "node", "dist", "hops"])
        for i, s in enumerate(self.sources):
            for v in range(self.dist.shape[1]):
                w.writerow([s, v, _fmt(self.dist[i, v]), int(self.hops[i, v])])
        return buf.getvalue()


def _fmt(x: float):
    return int(x) if math.isfinite(x) else "inf"


def oracle_distances(g: Graph, sources, hop_limit: int | None = None) -> DistanceTable:
    """Dijkstra distances from every source, plus exact d^h when hop_limit is given."""
    sources = list(sources)
    if not sources:
        raise ValueError("need at least one source")
    for s in sources:
        if not 0 <= s < g.n:
            raise KeyError(f"unknown node {s}")
    dist = dijkstra(g.csr(weighted=True), directed=False, indices=sources)
    hops = hop_matrix(g, sources)
    dist_h = None
    if hop_limit is not None:
        dist_h = hop_limited_distances(g, sources, hop_limit)
    return DistanceTable(sources, np.atleast_2d(dist), hops, hop_limit, dist_h)


def hop_limited_distances(g: Graph, sources, h: int) -> np.ndarray:
    """d^h by h rounds of Bellman–Ford, vectorized over sources."""
    edges = g.edges()
    if edges:
        us = np.array([e[0] for e in edges])
        vs = np.array([e[1] for e in edges])
        ws = np.array([g.weight(u, v) for u, v in edges], dtype=np.float64)
    cur = np.full((len(sources), g.n), np.inf)
    cur[np.arange(len(sources)), sources] = 0.0
    for _ in range(h):
        if not edges:
            break
        nxt = cur.copy()
        np.minimum.at(nxt.T, vs, (cur[:, us] + ws).T)
        np.minimum.at(nxt.T, us, (cur[:, vs] + ws).T)
        if np.array_equal(nxt, cur):
            break
        cur = nxt
    return cur


# adversarial instance


@dataclass
class HardInstance:
    graph: Graph
    node: int
    radius: int
    v1: list[int]
    v2: list[int]
    gap: int
    degenerate: bool = False
    reason: str = ""

    @property
    def heavy_weight(self) -> int:
        return self.graph.n * self.gap


def hard_instance(g: Graph, k: int, p_exponent: int = 1) -> HardInstance:
    """Weighted copy of g on which one node's distances to two large node sets
    differ by the factor p(n) = n**p_exponent.

    The node v is one attaining the graph's neighborhood quality, r = NQ - 1,
    and V1 is filled from V \\ B_r(v) in BFS order (ties by id) until it holds
    ⌈n/4⌉ nodes. Non-tree edges and edges between V1 ∪ B_r(v) and V2 get weight
    n·p(n); all other edges weight 1.
    """
    from .nq import nq_profile

    n = g.n
    gap = n**p_exponent
    if k > n // 2 or k < 1:
        return HardInstance(g, 0, 0, [], [], gap, True, "requires 1 <= k <= n/2")
    prof = nq_profile(g, k)
    v = max(range(n), key=lambda u: (prof.per_node[u], -u))
    r = prof.value - 1
    if r < 2:
        return HardInstance(g, v, r, [], [], gap, True, "neighborhood quality below 3")
    hops = bfs_hops(g, v)
    parent = [-1] * n
    order = sorted(range(n), key=lambda u: (hops[u], u))
    for u in order[1:]:
        parent[u] = min(w for w in g.adjacency[u] if hops[w] == hops[u] - 1)
    inner = {u for u in range(n) if hops[u] <= r}
    quota = -(-n // 4)
    v1 = [u for u in order if u not in inner][:quota]
    s1 = set(v1)
    v2 = [u for u in order if u not in inner and u not in s1]
    if len(v1) < quota or len(v2) < n / 4:
        return HardInstance(g, v, r, v1, v2, gap, True, "graph too small for the partition")
    near = inner | s1
    heavy = n * gap
    weights = {}
    for a, b in g.edges():
        tree = parent[a] == b or parent[b] == a
        crossing = (a in near) != (b in near)
        weights[(a, b)] = heavy if (not tree or crossing) else 1
    wg = g.with_weights(weights)
    wg.meta.update(kind="hard_instance", base=g.meta.get("kind"), k=k, p_exponent=p_exponent)
    return HardInstance(wg, v, r, v1, v2, gap)


# text I/O


def write_graph(g: Graph) -> str:
    """Header "n m weighted{0|1}", then one line per node: id followed by
    neighbor[:weight] entries. Node ids go on a final "ids" line when they
    differ from the index."""
    lines = [f"{g.n} {g.m} {int(g.weighted)}"]
    for v in range(g.n):
        parts = [str(v)]
        for u in g.adjacency[v]:
            parts.append(f"{u}:{g.weight(u, v)}" if g.weighted else str(u))
        lines.append(" ".join(parts))
    if g.node_ids != tuple(range(g.n)):
        lines.append("ids " + " ".join(map(str, g.node_ids)))
    return "\n".join(lines) + "\n"


def read_graph(text: str) -> Graph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 3:
        raise ConfigurationError("missing header line 'n m weighted'")
    n, m, weighted = (int(x) for x in rows[0])
    edges, weights, ids = set(), {}, None
    for row in rows[1:]:
        if row[0] == "ids":
            ids = [int(x) for x in row[1:]]
            continue
        v = int(row[0])
        for tok in row[1:]:
            if weighted:
                u, w = tok.split(":")
                u = int(u)
                weights[_edge_key(u, v)] = int(w)
            else:
                u = int(tok)
            edges.add(_edge_key(u, v))
    if len(edges) != m:
        raise ConfigurationError(f"header says {m} edges, found {len(edges)}")
    return Graph(n, sorted(edges), weights if weighted else None, ids, {"kind": "file"})
