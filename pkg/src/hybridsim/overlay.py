"""Virtual tree overlays over global edges.

* ``build_virtual_tree``: a constant-degree tree of logarithmic depth over
  all nodes. With ids exactly 0..n-1 it is the implicit heap over ids; in
  HYBRID0 it is built in-model by merging components along local edges.
* ``prune_tree``: restriction of a tree to flagged nodes by contracting
  unflagged walks.
* ``tree_aggregate_broadcast``: convergecast followed by broadcast.
"""
from __future__ import annotations

import json
import math
from collections import deque

from .graphcore import ConfigurationError, log2ceil
from .hybridnet import HybridNetwork

__all__ = [
    "VirtualTree",
    "build_virtual_tree",
    "prune_tree",
    "subset_tree",
    "tree_aggregate_broadcast",
    "run_schedule",
    "component_forest",
    "DEPTH_CONSTANT",
]

DEPTH_CONSTANT = 4


class VirtualTree:
    """Rooted tree over a member set, edges realised as global links.

    ``children`` lists are ordered by node id; a child's position in its
    parent's list is known to both (the parent tells it when the edge is
    created).
    """

    def __init__(self, parent: dict, root: int, ids=None, degree_bound: int | None = None):
        self.parent = dict(parent)
        self.root = root
        self.members = sorted(self.parent)
        key = (lambda v: ids[v]) if ids is not None else (lambda v: v)
        self.children = {v: [] for v in self.members}
        for v, p in self.parent.items():
            if p is not None:
                self.children[p].append(v)
        for lst in self.children.values():
            lst.sort(key=key)
        self.level = {root: 0}
        q = deque([root])
        while q:
            u = q.popleft()
            for c in self.children[u]:
                self.level[c] = self.level[u] + 1
                q.append(c)
        self.depth = max(self.level.values())
        self.max_degree = max(
            len(self.children[v]) + (self.parent[v] is not None) for v in self.members
        )
        self.degree_bound = degree_bound if degree_bound is not None else self.max_degree

    def __len__(self):
        return len(self.members)

    def validate(self):
        """Raise if the structure is not a tree spanning exactly its members."""
        roots = [v for v, p in self.parent.items() if p is None]
        if roots != [self.root]:
            raise AssertionError(f"expected single root {self.root}, found {roots}")
        if len(self.level) != len(self.members):
            raise AssertionError("some members are not reachable from the root")
        if self.max_degree > self.degree_bound:
            raise AssertionError("degree bound exceeded")

    def levels(self) -> list[list[int]]:
        out = [[] for _ in range(self.depth + 1)]
        for v in self.members:
            out[self.level[v]].append(v)
        return out

    def sibling_index(self, v: int) -> int:
        p = self.parent[v]
        return 0 if p is None else self.children[p].index(v)

    def to_json(self, ids=None) -> str:
        name = (lambda v: ids[v]) if ids is not None else (lambda v: v)
        edges = [[name(p), name(v)] for v, p in self.parent.items() if p is not None]
        return json.dumps({"root": name(self.root), "edges": sorted(edges)})


def run_schedule(net: HybridNetwork, schedule: dict, length: int):
    """Send scheduled global messages: ``schedule[r]`` holds (src, dst, payload)
    triples by node index for offset r. Returns the inboxes of every round."""
    inboxes = []
    for r in range(length):
        for u, v, p in schedule.get(r, ()):
            net.send_global_to(u, v, p)
        inboxes.append(net.advance()[1])
    return inboxes


# aggregation


def tree_aggregate_broadcast(net: HybridNetwork, tree: VirtualTree, values: dict, op):
    """Every member learns op-fold of all members' values.

    Convergecast then broadcast, each node acting once it heard from all its
    children. Children of a parent with more children than the receive cap
    report in groups of cap, by sibling index. Takes 2·depth·⌈Δ/cap⌉ rounds,
    which is 2·depth for constant-degree trees.
    """
    if len(tree) == 1:
        return {tree.root: values[tree.root]}
    cap = min(net.cfg.global_send_cap, net.cfg.global_recv_cap)
    groups = max(1, math.ceil(tree.max_degree / cap))
    acc = {v: values[v] for v in tree.members}
    pending = {v: len(tree.children[v]) for v in tree.members}
    sent = set()
    result = {}
    up_rounds = tree.depth * groups
    # up phase
    for r in range(up_rounds):
        for v in tree.members:
            p = tree.parent[v]
            if p is None or v in sent or pending[v]:
                continue
            if tree.sibling_index(v) // cap == r % groups:
                net.send_global_to(v, p, (0, acc[v]))
                sent.add(v)
        _, g_in = net.advance()
        for v in tree.members:
            for u, (_, val) in g_in[v]:
                acc[v] = op(acc[v], val)
                pending[v] -= 1
    if pending[tree.root]:
        raise AssertionError("convergecast did not finish within depth bound")
    result[tree.root] = acc[tree.root]
    # down phase: a node forwards to its children group by group
    sending = {tree.root: 0}
    for _ in range(up_rounds):
        for v, grp in sending.items():
            for c in tree.children[v][grp * cap : (grp + 1) * cap]:
                net.send_global_to(v, c, (0, result[v]))
        _, g_in = net.advance()
        for v in list(sending):
            sending[v] += 1
            if sending[v] * cap >= len(tree.children[v]):
                del sending[v]
        for v in tree.members:
            for _, (_, val) in g_in[v]:
                result[v] = val
                if tree.children[v]:
                    sending[v] = 0
        if not sending:
            break
    if len(result) != len(tree.members):
        raise AssertionError("broadcast did not reach every member")
    return result


# HYBRID: implicit heap over the id space


def build_virtual_tree(net: HybridNetwork) -> VirtualTree:
    """Constant-degree tree of depth O(log n) over all nodes, rooted at the
    highest id. Cached on the network."""
    if "vtree" in net.cache:
        return net.cache["vtree"]
    with net.phase("virtual_tree"):
        if net.hybrid0:
            tree = _build_hybrid0(net)
        else:
            order = sorted(range(net.n), key=lambda v: -net.ids[v])
            parent = {order[0]: None}
            for r in range(1, net.n):
                parent[order[r]] = order[(r - 1) // 2]
            tree = VirtualTree(parent, order[0], net.ids, degree_bound=3)
    net.cache["vtree"] = tree
    return tree


# HYBRID0: component merging with Euler-tour rings


def _lsb(x: int) -> int:
    return (x & -x).bit_length() - 1


def _lcrs_links(rank: int, size: int):
    """Parent rank and child ranks of ``rank`` in the left-child/right-sibling
    form of the binomial tree over 0..size-1. Every node has at most three
    tree neighbours."""
    top = max(1, (size - 1).bit_length())

    def order(p):
        return top if p == 0 else _lsb(p)

    kids = []
    b = order(rank)
    first = [j for j in range(b) if rank + (1 << j) < size]
    if first:
        kids.append(rank + (1 << max(first)))
    if rank == 0:
        return None, kids
    i = _lsb(rank)
    p = rank - (1 << i)
    if i >= 1:
        kids.append(rank - (1 << (i - 1)))
    if i + 1 < order(p) and p + (1 << (i + 1)) < size:
        return rank + (1 << i), kids
    return p, kids


def _forest_aggregate(net, parent, children, values, op, depth_bound):
    """Aggregate over every tree of a forest, all trees in parallel; padded
    to 2·depth_bound rounds so that all nodes stay in lock-step."""
    n = net.n
    acc = list(values)
    pending = [len(children[v]) for v in range(n)]
    sent = [False] * n
    for _ in range(depth_bound):
        for v in range(n):
            if parent[v] is not None and not sent[v] and pending[v] == 0:
                net.send_global_to(v, parent[v], (acc[v],) if acc[v] is not None else ())
                sent[v] = True
        _, g_in = net.advance()
        for v in range(n):
            for _, p in g_in[v]:
                pending[v] -= 1
                val = p[0] if p else None
                acc[v] = _opt(op, acc[v], val)
    res = [acc[v] if parent[v] is None else None for v in range(n)]
    done = [parent[v] is None for v in range(n)]
    fresh = [v for v in range(n) if done[v]]
    for _ in range(depth_bound):
        for v in fresh:
            for c in children[v]:
                net.send_global_to(v, c, (res[v],) if res[v] is not None else ())
        _, g_in = net.advance()
        fresh = []
        for v in range(n):
            for _, p in g_in[v]:
                res[v] = p[0] if p else None
                done[v] = True
                fresh.append(v)
    if not all(done):
        raise AssertionError("forest aggregation exceeded its depth bound")
    return res


def _opt(op, a, b):
    if a is None:
        return b
    if b is None:
        return a
    return op(a, b)


def _build_hybrid0(net: HybridNetwork) -> VirtualTree:
    g, n, ids = net.g, net.n, net.ids
    if n == 1:
        return VirtualTree({0: None}, 0, ids, degree_bound=3)
    vt_parent, _, _, depth_bound = component_forest(net)
    parent = {v: vt_parent[v] for v in range(n)}
    root = next(v for v in range(n) if vt_parent[v] is None)
    tree = VirtualTree(parent, root, ids, degree_bound=3)
    if tree.depth > depth_bound:
        raise AssertionError("virtual tree deeper than its certified bound")
    return tree


def component_forest(net: HybridNetwork, allowed=None):
    """Constant-degree trees of depth O(log n), one per connected component
    of the local edges accepted by ``allowed(u, v)`` (all edges if None).

    Borůvka-style merging: each component picks its lightest outgoing edge
    (by endpoint ids) through an aggregation on its current tree, the picked
    edges join, and the merged spanning trees are relabelled by Euler tours.
    Returns (parent, children, component id, depth bound) indexed by node.
    """
    g, n, ids = net.g, net.n, net.ids
    if g.max_degree() > min(net.cfg.global_send_cap, net.cfg.global_recv_cap):
        raise ConfigurationError(
            "the component tree construction needs max degree <= global cap "
            f"(degree {g.max_degree()}, cap {net.cfg.global_send_cap})"
        )
    depth_bound = DEPTH_CONSTANT * log2ceil(n)
    nbrs = [[u for u in g.adjacency[v] if allowed is None or allowed(v, u)] for v in range(n)]
    tnbr = [set() for _ in range(n)]
    vt_parent = [None] * n
    vt_children = [[] for _ in range(n)]
    comp = list(ids)
    while True:
        for v in range(n):
            for u in nbrs[v]:
                net.send_local(v, u, (comp[v],))
        l_in, _ = net.advance()
        cand = [None] * n
        for v in range(n):
            for u, (cu,) in l_in[v]:
                if cu != comp[v]:
                    e = (min(ids[v], ids[u]), max(ids[v], ids[u]))
                    cand[v] = e if cand[v] is None else min(cand[v], e)
        best = _forest_aggregate(net, vt_parent, vt_children, cand, min, depth_bound)
        if all(b is None for b in best):
            break
        for v in range(n):
            b = best[v]
            if b is not None and ids[v] in b:
                u = net.index[b[0] if b[1] == ids[v] else b[1]]
                if comp[u] != comp[v] and u in nbrs[v]:
                    net.send_local(v, u, (1,))
                    tnbr[v].add(u)
        l_in, _ = net.advance()
        for v in range(n):
            for u, _ in l_in[v]:
                tnbr[v].add(u)
        for v in range(n):
            lst = tuple(sorted(ids[u] for u in tnbr[v]))
            for u in tnbr[v]:
                net.send_local(v, u, lst)
        l_in, _ = net.advance()
        lists = [{u: p for u, p in l_in[v]} for v in range(n)]
        vt_parent, vt_children, comp = _euler_relabel(net, tnbr, lists)
    return vt_parent, vt_children, comp, depth_bound


def _euler_relabel(net, tnbr, lists):
    """Euler-tour ring of every component's spanning tree, then list ranking
    by pointer doubling. Returns the new per-component LCRS trees over
    compact ranks and the component ids (maximum id in each component)."""
    n, ids, index = net.n, net.ids, net.index
    steps = max(1, (2 * n).bit_length())
    order_ids = [sorted(ids[u] for u in tnbr[v]) for v in range(n)]
    arcs = [(v, u) for v in range(n) for u in sorted(tnbr[v], key=lambda x: ids[x])]

    def succ(a):
        v, u = a
        lst = lists[v][u]
        i = lst.index(ids[v])
        return (u, index[lst[(i + 1) % len(lst)]])

    def pred(a):
        v, u = a
        lst = order_ids[v]
        i = lst.index(ids[u])
        return (index[lst[(i - 1) % len(lst)]], v)

    fwd = [{a: succ(a) for a in arcs}]
    bwd = [{a: pred(a) for a in arcs}]
    mx = {a: ids[a[0]] for a in arcs}

    def push(direction, level, make):
        """Every arc sends one message to the arc ``direction[level][a]``."""
        for a in arcs:
            t = direction[level][a]
            net.send_global_to(a[0], t[0], (ids[t[1]],) + make(a))
        _, g_in = net.advance()
        got = {}
        for v in range(n):
            for _, p in g_in[v]:
                got[(v, index[p[0]])] = p[1:]
        return got

    # pass A: pointers at distance 2^i and the ring maximum
    for i in range(steps):
        f, b = fwd[i], bwd[i]
        got = push(bwd, i, lambda a: (ids[f[a][0]], ids[f[a][1]], mx[a]))
        nf, nmx = {}, {}
        for a in arcs:
            h, t, m = got[a]
            nf[a] = (index[h], index[t])
            nmx[a] = max(mx[a], m)
        got = push(fwd, i, lambda a: (ids[b[a][0]], ids[b[a][1]]))
        fwd.append(nf)
        bwd.append({a: (index[got[a][0]], index[got[a][1]]) for a in arcs})
        mx = nmx
    leader_of = {}
    for a in arcs:
        leader_of[a[0]] = mx[a]
    starts = set()
    for v in range(n):
        if tnbr[v] and leader_of[v] == ids[v]:
            starts.add((v, min(tnbr[v], key=lambda x: ids[x])))
    # pass B: position of every arc counted from its component's start arc
    off = {a: (0 if a in starts else None) for a in arcs}
    for i in range(steps):
        got = push(fwd, i, lambda a: (-1 if off[a] is None else off[a],))
        for a in arcs:
            (o,) = got[a]
            if off[a] is None and o >= 0:
                off[a] = (1 << i) + o
    rep = {}
    for a in arcs:
        if a[0] not in rep or off[a] < off[rep[a[0]]]:
            rep[a[0]] = a
    is_rep = {a: rep[a[0]] == a for a in arcs}
    # pass C: the next representative after every arc
    got = push(bwd, 0, lambda a: (ids[a[0]] if is_rep[a] else -1,))
    nxt = {a: (None if got[a][0] < 0 else index[got[a][0]]) for a in arcs}
    for i in range(steps):
        got = push(bwd, i, lambda a: (-1 if nxt[a] is None else ids[nxt[a]],))
        for a in arcs:
            if nxt[a] is None and got[a][0] >= 0:
                nxt[a] = index[got[a][0]]
    # pass D: compact rank = representatives at or before the arc
    cnt = {a: int(is_rep[a]) for a in arcs}
    for i in range(steps):
        got = push(fwd, i, lambda a: (cnt[a],))
        cnt = {a: cnt[a] + (got[a][0] if off[a] >= (1 << i) else 0) for a in arcs}
    rank = [0] * n
    csucc = list(range(n))
    for v, a in rep.items():
        rank[v] = cnt[a] - 1
        csucc[v] = nxt[a]
    # compact ring over nodes
    members = [v for v in range(n) if tnbr[v]]
    for v in members:
        net.send_global_to(v, csucc[v], ())
    _, g_in = net.advance()
    cpred = list(range(n))
    for v in members:
        cpred[v] = g_in[v][0][0]
    cf, cb = [list(csucc)], [list(cpred)]
    mr = list(rank)
    for i in range(max(1, n.bit_length())):
        f, b = cf[i], cb[i]
        for v in members:
            net.send_global_to(v, b[v], (ids[f[v]], mr[v]))
        _, g_in = net.advance()
        nf, nmr = list(f), list(mr)
        for v in members:
            (_, (fid, m)) = g_in[v][0]
            nf[v] = index[fid]
            nmr[v] = max(mr[v], m)
        for v in members:
            net.send_global_to(v, f[v], (ids[b[v]],))
        _, g_in = net.advance()
        nb = list(b)
        for v in members:
            nb[v] = index[g_in[v][0][1][0]]
        cf.append(nf)
        cb.append(nb)
        mr = nmr
    parent = [None] * n
    children = [[] for _ in range(n)]
    comp = list(ids)
    for v in members:
        size = mr[v] + 1
        p, kids = _lcrs_links(rank[v], size)
        parent[v] = None if p is None else _at(v, rank[v], p, cf, cb)
        children[v] = [_at(v, rank[v], c, cf, cb) for c in kids]
        comp[v] = leader_of[v]
    return parent, children, comp


def _at(v, r, target, cf, cb):
    """Node at compact rank ``target`` reached by one stored pointer from v."""
    d = target - r
    j = abs(d).bit_length() - 1
    assert abs(d) == 1 << j
    return cf[j][v] if d > 0 else cb[j][v]


# pruning


def prune_tree(net: HybridNetwork, tree: VirtualTree, flags) -> VirtualTree:
    """Restrict ``tree`` to flagged members.

    Unflagged subtrees without flagged nodes vanish. An unflagged node whose
    subtree holds flagged nodes starts a walk towards a flagged descendant;
    the walk contracts into that descendant, which adopts the walk's other
    children. Walks run in stages, one per depth level of the output, so
    the result has depth at most the input depth and degree at most
    (Δ-1)·d + Δ for input degree Δ and depth d.
    """
    flagged = {v for v in tree.members if (flags(v) if callable(flags) else v in flags)}
    if not flagged:
        raise ValueError("prune_tree needs at least one flagged node")
    ids = net.ids
    cap = min(net.cfg.global_send_cap, net.cfg.global_recv_cap)
    d = max(1, tree.depth)
    deg_in = max(1, tree.max_degree)
    deg_out = (deg_in - 1) * d + deg_in
    window = max(1, math.ceil(deg_out / cap))
    with net.phase("prune"):
        # which subtrees contain a flagged node: convergecast of one bit
        has = {v: v in flagged for v in tree.members}
        for lvl in reversed(tree.levels()[1:]):
            sched = {}
            for v in lvl:
                grp = tree.sibling_index(v) // cap
                sched.setdefault(grp, []).append((v, tree.parent[v], (int(has[v]),)))
            for grp in range(math.ceil(max(1, tree.max_degree) / cap)):
                for u, p, bit in sched.get(grp, ()):
                    net.send_global_to(u, p, bit)
                _, g_in = net.advance()
                for v in tree.members:
                    for _, (bit,) in g_in[v]:
                        has[v] = has[v] or bool(bit)
        live = lambda v: [c for c in tree.children[v] if has[c]]
        parent = {}
        tasks = [(tree.root, None, 0)]
        while tasks:
            new_tasks = []
            sched: dict[int, list] = {}
            t_walk = window
            t_up = t_walk + d
            t_orphan = t_up + d
            t_report = t_orphan + 1
            t_notify = t_report + d
            length = t_notify + window
            for x, p, j in tasks:
                walk, cur = [], x
                while cur not in flagged:
                    walk.append(cur)
                    cur = live(cur)[0]
                star = cur
                parent[star] = p
                token = (1,) if p is None else (1, ids[p])
                chain = walk + [star]
                for i in range(1, len(chain)):
                    sched.setdefault(t_walk + i - 1, []).append((chain[i - 1], chain[i], token))
                if walk:
                    for i in range(len(chain) - 1, 0, -1):
                        sched.setdefault(t_up + len(chain) - 1 - i, []).append(
                            (chain[i], chain[i - 1], (ids[star],))
                        )
                adopted = []
                for i, w in enumerate(walk):
                    nxt = walk[i + 1] if i + 1 < len(walk) else star
                    for c in live(w):
                        if c != nxt:
                            adopted.append(c)
                            sched.setdefault(t_orphan, []).append((w, c, (ids[star],)))
                            sched.setdefault(t_report + i, []).append((c, star, (2,)))
                if p is not None:
                    sched.setdefault(t_notify + j // cap, []).append((star, p, (3,)))
                kids = sorted(live(star) + adopted, key=lambda v: ids[v])
                for idx, c in enumerate(kids):
                    new_tasks.append((c, star, idx))
            run_schedule(net, sched, length)
            if new_tasks:
                launch = {}
                for c, s, idx in new_tasks:
                    launch.setdefault(idx // cap, []).append((s, c, (ids[s], idx)))
                run_schedule(net, launch, window)
            tasks = new_tasks
    out = VirtualTree(parent, next(v for v, p in parent.items() if p is None), ids, degree_bound=deg_out)
    if out.depth > tree.depth:
        raise AssertionError("pruning increased depth")
    return out


def subset_tree(net: HybridNetwork, flags) -> VirtualTree:
    """Tree of degree O(log n) and depth O(log n) over the flagged nodes."""
    return prune_tree(net, build_virtual_tree(net), flags)
