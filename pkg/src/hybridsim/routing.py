"""(k, l)-routing: every target learns its individual message from every source.

Sources (or their helpers) push labelled messages to pseudo-random
intermediate nodes chosen by a shared hash of (source id, target id);
target helpers then fetch them with one request per round. Helper sets
come from the clustering, so each designated node gets about k/NQ nearby
helpers and no node helps more than O(log n) designated nodes.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .dissemination import TokenSet, k_disseminate
from .graphcore import ConfigurationError, bfs_hops, log2ceil
from .hybridnet import HybridNetwork
from .nq import Clustering, cluster_partition
from .overlay import build_virtual_tree, tree_aggregate_broadcast

__all__ = [
    "HashFamilyMember",
    "HelperAssignment",
    "RoutingInstance",
    "RoutingResult",
    "Consolidation",
    "next_prime",
    "sample_hash",
    "adaptive_helpers",
    "intermediate_map",
    "consolidate_sources",
    "kl_route",
    "load_bound",
    "MEMBERSHIP_CONSTANT",
]

ARB_RAND = "arb_src_rand_tgt"
RAND_ARB = "rand_src_arb_tgt"
RAND_RAND = "rand_src_rand_tgt"
SCENARIOS = (ARB_RAND, RAND_ARB, RAND_RAND)

# helper membership is at most 16c·ln n w.h.p., i.e. below 12c·log2 n
MEMBERSHIP_CONSTANT = 12


def _is_prime(x: int) -> bool:
    if x < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if x % p == 0:
            return x == p
    d, s = x - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        y = pow(a, d, x)
        if y in (1, x - 1):
            continue
        for _ in range(s - 1):
            y = y * y % x
            if y == x - 1:
                break
        else:
            return False
    return True


def next_prime(x: int) -> int:
    """Smallest prime >= x (deterministic Miller-Rabin, exact below 3·10^23)."""
    x = max(2, x)
    while not _is_prime(x):
        x += 1
    return x


@dataclass(frozen=True)
class HashFamilyMember:
    """Polynomial of degree kappa-1 over GF(prime), keyed by i·n + j and
    reduced into [0, n)."""

    kappa: int
    prime: int
    coeffs: tuple
    n: int

    def __call__(self, i: int, j: int) -> int:
        x = (i * self.n + j) % self.prime
        acc = 0
        for a in self.coeffs:
            acc = (acc * x + a) % self.prime
        return acc % self.n

    def seed_bits(self) -> int:
        return self.kappa * self.prime.bit_length()


def sample_hash(kappa: int, n: int, seed: int) -> HashFamilyMember:
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    p = next_prime(max(2, n * n))
    rng = np.random.default_rng(seed)
    coeffs = tuple(int(x) for x in rng.integers(0, p, size=kappa))
    return HashFamilyMember(kappa, p, coeffs, n)


def load_bound(k: int, ell: int, n: int, c: float = 2.0) -> float:
    """Balls-into-bins ceiling on pairs per intermediate: kl/n + 3c·ln n."""
    return k * ell / n + 3 * c * math.log(max(n, 2))


# helper sets


@dataclass
class HelperAssignment:
    k: int
    designated: list
    helpers: dict
    min_size: int
    max_hop: int
    max_membership: int
    size_target: float
    hop_bound: int
    flags: list = field(default_factory=list)
    rounds: int = 0

    def membership(self) -> dict:
        count: dict = defaultdict(int)
        for hs in self.helpers.values():
            for u in hs:
                count[u] += 1
        return dict(count)

    def certified(self, n: int, c_m: int = MEMBERSHIP_CONSTANT) -> bool:
        return (
            self.min_size >= self.size_target
            and self.max_hop <= self.hop_bound
            and self.max_membership <= c_m * log2ceil(n)
        )


def _clustering(net: HybridNetwork, k: int) -> Clustering:
    key = ("clustering", k)
    if key not in net.cache:
        net.cache[key] = cluster_partition(net.g, k, "in_model", net)
    return net.cache[key]


def _local(net, rounds, msgs=0, bits=0):
    if rounds > 0:
        net.idle(rounds, msgs, bits)


def adaptive_helpers(
    net: HybridNetwork, W, k: int, c: float = 1.0, join_prob: float | None = None, clustering: Clustering | None = None
) -> HelperAssignment:
    """Helper set H_w for each w in W, drawn from w's cluster.

    Each node v of cluster C joins H_w for every w in C ∩ W with probability
    q_C = min(1, (k/NQ)·(1/|C|)·8c·ln n), using v's own random stream.
    ``join_prob`` is the caller's sampling rate for W; a rate above NQ/k is
    flagged but the sets are still built.
    """
    n = net.n
    W = sorted(set(W))
    start = net.round
    kc = min(max(1, k), n)
    cl = clustering or _clustering(net, kc)
    nq = cl.nq
    flags = []
    if join_prob is not None and join_prob > nq / k + 1e-12:
        flags.append(f"designated nodes sampled at {join_prob:.4g} > NQ/k = {nq / k:.4g}")
    d = cl.diameter_bound
    helpers: dict = {}
    with net.phase("helpers"):
        # members learn C and C ∩ W, then w learns who joined H_w
        _local(net, d, sum(net.g.degree(v) for v in range(n)) * d)
        in_w = set(W)
        lnn = math.log(max(n, 2))
        for ci, mem in enumerate(cl.members):
            ws = [w for w in mem if w in in_w]
            if not ws:
                continue
            q = min(1.0, (k / nq) * (1 / len(mem)) * 8 * c * lnn)
            for w in ws:
                helpers[w] = []
            for v in mem:
                draws = net.rng(v).random(len(ws))
                for w, x in zip(ws, draws):
                    if x < q:
                        helpers[w].append(v)
        _local(net, d, len(W) * d)
    max_hop = 0
    for w, hs in helpers.items():
        if hs:
            hops = bfs_hops(net.g, w)
            max_hop = max(max_hop, max(hops[u] for u in hs))
    member = defaultdict(int)
    for hs in helpers.values():
        for u in hs:
            member[u] += 1
    return HelperAssignment(
        k,
        W,
        {w: sorted(hs) for w, hs in helpers.items()},
        min((len(h) for h in helpers.values()), default=0),
        max_hop,
        max(member.values(), default=0),
        k / nq,
        d,
        flags,
        net.round - start,
    )


# shared hash


def intermediate_map(
    net: HybridNetwork, k: int, ell: int, S=None, T=None, seed: int | None = None, c: float = 2.0, c_kappa: float = 1.0
):
    """Pick a kappa-wise independent hash at the highest-id node and
    broadcast its coefficients by k-dissemination (split into ⌈log2 n⌉-bit
    chunks). Returns (hash, certificate); with S and T given the
    certificate holds the measured pair load per intermediate node."""
    n = net.n
    start = net.round
    kc = min(max(1, k), n)
    cl = _clustering(net, kc)
    nq = cl.nq
    flags = []
    if k * ell > nq * n:
        flags.append(f"k·l = {k * ell} exceeds NQ·n = {nq * n}")
    kappa = max(1, math.ceil(c_kappa * nq * log2ceil(n)))
    origin = max(range(n), key=lambda v: net.ids[v])
    if seed is None:
        seed = int(net.rng(origin).integers(0, 2**62))
    h = sample_hash(kappa, n, seed)
    lg = net.lg
    chunks = math.ceil(h.prime.bit_length() / lg)
    tokens, place = {}, {origin: []}
    for a, coef in enumerate(h.coeffs):
        for b in range(chunks):
            tid = (net.ids[origin], a * chunks + b)
            tokens[tid] = (coef >> (b * lg)) & ((1 << lg) - 1)
            place[origin].append(tid)
    with net.phase("hash_seed"):
        res = k_disseminate(net, TokenSet(tokens, place))
    # every node rebuilds the same coefficients
    got = sorted(next(iter(res.outputs)), key=lambda x: x[1])
    rebuilt = [0] * kappa
    for _, seq, part in got:
        a, b = divmod(seq, chunks)
        rebuilt[a] |= part << (b * lg)
    if tuple(rebuilt) != h.coeffs or any(o != res.outputs[0] for o in res.outputs):
        raise AssertionError("hash seed broadcast disagrees")
    cert = {"kappa": kappa, "prime": h.prime, "rounds": net.round - start, "flags": flags}
    if S is not None and T is not None:
        load = defaultdict(int)
        for s in S:
            for t in T:
                load[h(net.ids[s], net.ids[t])] += 1
        cert["max_load"] = max(load.values(), default=0)
        cert["bound"] = load_bound(len(S), len(T), n, c)
    return h, cert


# instances


@dataclass
class RoutingInstance:
    sources: list
    targets: list
    scenario: str
    k: float
    ell: float
    payloads: dict

    @classmethod
    def sample(cls, n: int, scenario: str, k: int, ell: int, seed: int, arbitrary: str = "random", payload_bits: int | None = None):
        """Random sides join independently with probability k/n (resp. l/n);
        arbitrary sides have exactly k (resp. l) nodes, either a random
        subset or the lowest indices (``arbitrary="block"``)."""
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {scenario!r}")
        rng = np.random.default_rng(seed)
        bits = payload_bits or log2ceil(n)

        def pick(size, random_side):
            if random_side:
                return sorted(int(v) for v in np.flatnonzero(rng.random(n) < size / n))
            if arbitrary == "block":
                return list(range(size))
            return sorted(int(v) for v in rng.choice(n, size=size, replace=False))

        S = pick(k, scenario != ARB_RAND)
        T = pick(ell, scenario != RAND_ARB)
        payloads = {(s, t): int(rng.integers(0, 1 << bits)) for s in S for t in T}
        return cls(S, T, scenario, k, ell, payloads)

    def validate(self, net: HybridNetwork) -> list:
        """Scenario constraints, returned as human-readable flags (advisory)."""
        n = net.n
        flags = []
        k, ell = self.k, self.ell
        if self.scenario == ARB_RAND and ell > _clustering(net, min(n, max(1, round(k)))).nq:
            flags.append("case 1 needs l <= NQ_k")
        if self.scenario == RAND_ARB and k > _clustering(net, min(n, max(1, round(ell)))).nq:
            flags.append("case 2 needs k <= NQ_l")
        if self.scenario == RAND_RAND and k * ell > _clustering(net, min(n, max(1, round(max(k, ell))))).nq * n:
            flags.append("case 3 needs k·l <= NQ·n")
        return flags


@dataclass
class RoutingResult:
    delivered: dict
    rounds: int
    stats: dict = field(default_factory=dict)

    def exact(self, inst: RoutingInstance, ids=None) -> bool:
        want: dict = defaultdict(dict)
        for (s, t), p in inst.payloads.items():
            want[t][s] = p
        return {t: dict(v) for t, v in self.delivered.items() if v} == {t: v for t, v in want.items()}


# core relay


class _Script:
    """Data-carrying global transitions by round offset, for reversal."""

    def __init__(self, net):
        self.net = net
        self.start = net.round
        self.moves: list = []

    def note(self, src, dst, label):
        self.moves.append((self.net.round - self.start, src, dst, label))

    def length(self):
        return self.net.round - self.start


def _deal(items, nodes):
    out = defaultdict(list)
    for i, x in enumerate(items):
        out[nodes[i % len(nodes)]].append(x)
    return out


def _max_everywhere(net, value_of):
    tree = build_virtual_tree(net)
    vals = {v: value_of(v) for v in range(net.n)}
    return tree_aggregate_broadcast(net, tree, vals, max)[tree.root]


def _relay(net, demands, HS, HT, h, d_s, d_t, script=None, stats=None):
    """Sources' helpers push labelled messages to h(i, j); targets' helpers
    fetch them with alternating request and reply rounds."""
    ids = net.ids
    index = net.index
    stats = stats if stats is not None else {}
    by_source = defaultdict(list)
    for (s, t), p in demands.items():
        by_source[s].append((ids[s], ids[t], p))
    # sources spread their messages over their helpers
    out_q = defaultdict(list)
    for s, msgs in by_source.items():
        msgs.sort()
        for u, part in _deal(msgs, HS.get(s) or [s]).items():
            out_q[u].extend(part)
            if script is not None and u != s:
                script.note(s, u, ("spread",) + tuple(x[:2] for x in part))
    _local(net, d_s, len(demands) * d_s)
    rounds = _max_everywhere(net, lambda v: len(out_q.get(v, ())))
    stored: dict = defaultdict(dict)
    load: dict = defaultdict(int)
    for r in range(rounds):
        for u, q in out_q.items():
            if r < len(q):
                i, j, p = q[r]
                dst = index[h(i, j)]
                net.send_global_to(u, dst, (i, j, p))
                if script is not None:
                    script.note(u, dst, (i, j))
        _, g_in = net.advance()
        for v, msgs in enumerate(g_in):
            for _, (i, j, p) in msgs:
                stored[v][(i, j)] = p
                load[v] += 1
    stats["intermediate_load"] = max(load.values(), default=0)
    # targets spread their requests over their helpers
    by_target = defaultdict(list)
    for (s, t) in demands:
        by_target[t].append((ids[s], ids[t]))
    req_q = defaultdict(list)
    owner = {}
    for t, reqs in by_target.items():
        reqs.sort()
        for w, part in _deal(reqs, HT.get(t) or [t]).items():
            req_q[w].extend(part)
            for lab in part:
                owner[(w, lab)] = t
    _local(net, d_t, len(demands) * d_t)
    rounds = _max_everywhere(net, lambda v: len(req_q.get(v, ())))
    fetched = defaultdict(list)
    for r in range(rounds):
        for w, q in req_q.items():
            if r < len(q):
                i, j = q[r]
                net.send_global_to(w, index[h(i, j)], (i, j))
        _, g_in = net.advance()
        for v, msgs in enumerate(g_in):
            for w, (i, j) in msgs:
                net.send_global_to(v, w, (i, j, stored[v][(i, j)]))
                if script is not None:
                    script.note(v, w, (i, j))
        _, g_in = net.advance()
        for w, msgs in enumerate(g_in):
            for _, (i, j, p) in msgs:
                fetched[w].append((i, j, p))
    # targets collect from their helpers
    delivered: dict = defaultdict(dict)
    for w, items in fetched.items():
        for i, j, p in items:
            t = owner[(w, (i, j))]
            delivered[t][index[i]] = p
            if script is not None and w != t:
                script.note(w, t, ("collect", (i, j)))
    _local(net, d_t, len(demands) * d_t)
    return delivered


def _replay_reversed(net, script: _Script, payload_of, length):
    """Run the recorded transitions backwards in time with the real
    messages. Global moves keep their per-round pattern with sender and
    receiver swapped, so caps hold by symmetry. Returns node -> labels held."""
    at: dict = defaultdict(dict)
    for (v, lab), p in payload_of.items():
        at[v][lab] = p
    glob = defaultdict(list)
    spread = []
    for tau, src, dst, label in script.moves:
        if label[0] == "spread":
            spread.append((src, dst, label[1:]))
        elif label[0] == "collect":
            # reversed: the real source hands the message to that helper
            lab = label[1]
            at[src][lab] = at[dst][lab]
        else:
            glob[length - 1 - tau].append((dst, src, label))
    r = 0
    while r < length:
        if r not in glob:
            nxt = min((x for x in glob if x > r), default=length)
            net.idle(nxt - r)
            r = nxt
            continue
        for src, dst, (i, j) in glob[r]:
            net.send_global_to(src, dst, (i, j, at[src][(i, j)]))
        _, g_in = net.advance()
        for v, msgs in enumerate(g_in):
            for _, (i, j, p) in msgs:
                at[v][(i, j)] = p
        r += 1
    for src, dst, labels in spread:
        for lab in labels:
            if lab in at[dst]:
                at[src][lab] = at[dst][lab]
    return at


# consolidation


@dataclass
class Consolidation:
    sub_instances: list
    super_of: dict
    subtarget_of: dict
    bound: float
    flags: list
    rounds: int = 0
    target_of: dict = field(default_factory=dict)


def consolidate_sources(net: HybridNetwork, inst: RoutingInstance, c: float = 1.0, seed: int = 0) -> Consolidation:
    """Reduce many random sources to few super sources and sub-targets.

    Sources join S' with p = min(1, NQ·n/k²·8c·ln n); T' samples V with
    q = min(1, k/n·8c·ln n). Inside each cluster sources are dealt to super
    sources and targets to sub-targets. A target gives each source that
    shares a super source a different sub-target, so every (super source,
    sub-target) pair still carries at most one message. Both sides are then
    split into random groups small enough that every group pair is an
    instance with k', l' <= √(n·NQ). With k <= √(n·NQ) nothing changes.
    """
    n = net.n
    start = net.round
    k = len(inst.sources)
    ell = len(inst.targets)
    kc = min(max(1, k), n)
    cl = _clustering(net, kc)
    nq = cl.nq
    bound = math.sqrt(n * nq)
    flags = []
    if k <= bound:
        return Consolidation([inst], {s: s for s in inst.sources}, {}, bound, flags, 0)
    if ell > k:
        flags.append("consolidation expects l <= k")
    lnn = math.log(max(n, 2))
    p = min(1.0, nq * n / (k * k) * 8 * c * lnn)
    q = min(1.0, k / n * 8 * c * lnn)
    super_set = [s for s in inst.sources if net.rng(s).random() < p]
    sub_set = [v for v in range(n) if net.rng(v).random() < q]
    d = cl.diameter_bound
    super_of, subtargets = {}, {}
    in_s, in_t = set(inst.sources), set(inst.targets)
    in_sp, in_tp = set(super_set), set(sub_set)
    with net.phase("consolidate"):
        _local(net, 2 * d, n * d)
        for mem in cl.members:
            src = [v for v in mem if v in in_s]
            sup = [v for v in mem if v in in_sp]
            if src and not sup:
                flags.append(f"cluster of node {mem[0]} has no super source")
                sup = [src[0]]
                in_sp.add(src[0])
            for i, s in enumerate(src):
                super_of[s] = sup[i % len(sup)]
            tg = [v for v in mem if v in in_t]
            st = [v for v in mem if v in in_tp]
            if tg and not st:
                flags.append(f"cluster of node {mem[0]} has no sub-target")
                st = list(tg)
            for i, t in enumerate(tg):
                subtargets[t] = st[i::len(tg)] or [st[i % len(st)]]
    # messages regrouped: (super source, sub-target) -> (s, t, payload)
    rank = {}
    by_super = defaultdict(list)
    for s in sorted(inst.sources):
        by_super[super_of[s]].append(s)
    for sp, ss in by_super.items():
        for r, s in enumerate(ss):
            rank[s] = r
    subtarget_of = {}
    carried: dict = {}
    owner: dict = {}
    for (s, t), pay in inst.payloads.items():
        sts = subtargets[t]
        tp = sts[rank[s] % len(sts)]
        key = (super_of[s], tp)
        if key in carried:
            flags.append(f"super source {key[0]} has two messages for sub-target {tp}")
        carried[key] = (net.ids[s], pay)
        owner[key] = t
        subtarget_of[(s, t)] = tp
    # random subdivision into groups
    sp_all = sorted(in_sp)
    tp_all = sorted({tp for (_, tp) in carried})
    sig_s = max(1, math.ceil(2 * len(sp_all) / bound))
    sig_t = max(1, math.ceil(2 * len(tp_all) / bound))
    rng = np.random.default_rng(seed)
    gs = {v: int(rng.integers(sig_s)) for v in sp_all}
    gt = {v: int(rng.integers(sig_t)) for v in tp_all}
    subs = []
    for a in range(sig_s):
        for b in range(sig_t):
            pays = {key: val for key, val in carried.items() if gs[key[0]] == a and gt[key[1]] == b}
            if not pays:
                continue
            S2 = sorted({x for x, _ in pays})
            T2 = sorted({y for _, y in pays})
            sub = RoutingInstance(S2, T2, RAND_RAND, len(S2), len(T2), pays)
            subs.append(sub)
            if len(S2) > bound or len(T2) > bound:
                flags.append(f"sub-instance {len(S2)}x{len(T2)} above √(n·NQ) = {bound:.1f}")
    return Consolidation(subs, super_of, subtarget_of, bound, flags, net.round - start, owner)


# entry point


def _publish_ids(net, nodes):
    """Make the ids of ``nodes`` known everywhere (k-dissemination)."""
    if not nodes:
        return
    ids = net.ids
    place = {v: [(ids[v], 0)] for v in nodes}
    tokens = {(ids[v], 0): 0 for v in nodes}
    with net.phase("publish_ids"):
        k_disseminate(net, TokenSet(tokens, place))


def _case_with_helpers(net, inst, both_sides, script=None, c=1.0, stats=None):
    n = net.n
    S, T = inst.sources, inst.targets
    kparam = max(len(S), len(T), 1)
    cl = _clustering(net, min(n, kparam))
    ht = adaptive_helpers(net, T, kparam, c, clustering=cl)
    hs = adaptive_helpers(net, S, kparam, c, clustering=cl) if both_sides else None
    h, cert = intermediate_map(net, len(S), len(T), S, T)
    _publish_ids(net, S)
    if stats is not None:
        stats["helpers_t"] = ht
        stats["helpers_s"] = hs
        stats["hash"] = cert
        stats["nq"] = cl.nq
    d = cl.diameter_bound
    if script is not None:
        script.start = net.round
    return _relay(
        net,
        inst.payloads,
        hs.helpers if hs else {},
        ht.helpers,
        h,
        d if both_sides else 0,
        d,
        script,
        stats,
    )


def _reversed(inst: RoutingInstance, scenario: str) -> RoutingInstance:
    pays = {(t, s): 0 for (s, t) in inst.payloads}
    return RoutingInstance(list(inst.targets), list(inst.sources), scenario, inst.ell, inst.k, pays)


def kl_route(net: HybridNetwork, inst: RoutingInstance, c: float = 1.0, seed: int = 0) -> RoutingResult:
    """Solve (k, l)-routing in HYBRID.

    Case 1 (arbitrary sources, random targets): targets get helpers and
    sources stream directly. Case 3 (both random): both sides get helpers;
    when there are more than √(n·NQ) sources they are consolidated first,
    and when targets outnumber sources the reversed problem is solved and
    replayed. Case 2 (random sources, arbitrary targets) routes tiny logging
    messages from targets to sources as in case 1, then sends the real
    messages backwards along the logged transitions.
    """
    if net.hybrid0:
        raise ConfigurationError("kl_route needs HYBRID (ids 0..n-1)")
    start = net.round
    stats: dict = {"flags": inst.validate(net)}
    if not inst.payloads:
        return RoutingResult({}, 0, stats)
    ids = net.ids
    if inst.scenario == ARB_RAND:
        delivered = _case_with_helpers(net, inst, False, None, c, stats)
    elif inst.scenario == RAND_ARB or (inst.scenario == RAND_RAND and len(inst.targets) > len(inst.sources)):
        rev = _reversed(inst, ARB_RAND if inst.scenario == RAND_ARB else RAND_RAND)
        script = _Script(net)
        _case_with_helpers(net, rev, inst.scenario == RAND_RAND, script, c, stats)
        length = script.length()
        pay = {(s, (ids[s], ids[t])): p for (s, t), p in inst.payloads.items()}
        # logging labels are (target id, source id); the real labels swap them
        rev_script = _Script(net)
        rev_script.moves = [
            (tau, a, b, _swap_label(lab)) for tau, a, b, lab in script.moves
        ]
        with net.phase("replay"):
            at = _replay_reversed(net, rev_script, pay, length)
        delivered = defaultdict(dict)
        want_t = set(inst.targets)
        for (s, t), p in inst.payloads.items():
            lab = (ids[s], ids[t])
            if lab in at.get(t, {}):
                delivered[t][s] = at[t][lab]
    else:
        k = len(inst.sources)
        cl = _clustering(net, min(net.n, max(1, k)))
        if k > math.sqrt(net.n * cl.nq):
            cons = consolidate_sources(net, inst, c, seed)
            stats["consolidation"] = cons
            delivered = defaultdict(dict)
            sub_stats = []
            for sub in cons.sub_instances:
                st: dict = {}
                # sub-targets first tell their super sources where to send
                rev = _reversed(sub, RAND_RAND)
                _case_with_helpers(net, rev, True, None, c, {})
                got = _case_with_helpers(net, sub, True, None, c, st)
                sub_stats.append(st)
                for tp, msgs in got.items():
                    for sp, (sid, p) in msgs.items():
                        delivered[cons.target_of[(sp, tp)]][net.index[sid]] = p
            _local(net, cl.diameter_bound, len(inst.payloads))
            stats["sub_stats"] = sub_stats
            stats["intermediate_load"] = max((s.get("intermediate_load", 0) for s in sub_stats), default=0)
        else:
            delivered = _case_with_helpers(net, inst, True, None, c, stats)
    return RoutingResult({t: dict(v) for t, v in delivered.items()}, net.round - start, stats)


def _swap_label(lab):
    if lab[0] == "spread":
        return ("spread",) + tuple((b, a) for a, b in lab[1:])
    if lab[0] == "collect":
        return ("collect", lab[1][::-1])
    return lab[::-1]
