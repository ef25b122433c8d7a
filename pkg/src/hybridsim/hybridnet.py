"""Round-synchronous engine for the hybrid model.

Local messages travel along graph edges with unlimited bandwidth. Global
messages may go to any node but each node sends and receives at most a
capped number per round, each of bounded size. Messages queued in a round
are delivered at the start of the next one, ordered by sender id then by
sequence number.

Two styles of algorithm run on the same accounting:

* ``execute`` drives a :class:`NodeProgram`, one handler call per node and
  round.
* Multi-phase algorithms drive a :class:`HybridNetwork` directly: they queue
  messages with ``send_local``/``send_global`` and call ``advance`` once per
  round, touching only per-node state in between. Neighbourhood learning
  (every node learns the ids and states of all nodes within r hops) is
  provided by ``flood`` and costs exactly r rounds.
"""
from __future__ import annotations

import json
import math
from array import array
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graphcore import ConfigurationError, Graph, log2ceil

__all__ = [
    "UNLIMITED",
    "IdMode",
    "Overflow",
    "ModelConfig",
    "ModelError",
    "CapViolation",
    "BudgetExhausted",
    "Transcript",
    "HybridNetwork",
    "NodeContext",
    "NodeProgram",
    "execute",
    "payload_bits",
]

UNLIMITED = None


class IdMode(str, Enum):
    HYBRID = "hybrid"
    HYBRID0 = "hybrid0"


class Overflow(str, Enum):
    FAIL = "fail"
    DROP_ARBITRARY = "drop"


class ModelError(RuntimeError):
    """A message that the model forbids: non-neighbour local send, oversized
    global payload, or a global send to an unknown id in HYBRID0."""


class CapViolation(RuntimeError):
    """A node exceeded its global send or receive capacity under FAIL."""


class BudgetExhausted(RuntimeError):
    """The round budget ran out before the algorithm finished."""


@dataclass(frozen=True)
class ModelConfig:
    n: int
    global_msg_size: int
    global_send_cap: int
    global_recv_cap: int
    id_mode: IdMode = IdMode.HYBRID
    id_exponent: int = 1
    overflow_policy: Overflow = Overflow.FAIL
    local_limit: int | None = UNLIMITED

    def __post_init__(self):
        if self.global_send_cap < 1 or self.global_recv_cap < 1:
            raise ConfigurationError("global caps must be at least 1")
        if self.global_msg_size < 1:
            raise ConfigurationError("global message size must be positive")
        if self.id_mode == IdMode.HYBRID0 and self.id_exponent < 1:
            raise ConfigurationError("HYBRID0 needs an id exponent >= 1")

    @classmethod
    def for_graph(
        cls,
        g: Graph,
        mode: IdMode | str = IdMode.HYBRID,
        c_bits: int = 4,
        cap: int | None = None,
        overflow: Overflow | str = Overflow.FAIL,
        local_limit: int | None = UNLIMITED,
    ) -> "ModelConfig":
        """Defaults: caps ⌈log2 n⌉ messages, size c_bits·⌈log2 n⌉ bits.

        In HYBRID0 ids take c·log2 n bits, so the size scales with c. The
        logarithm in the size is floored at 2 so that a message can carry a
        few ids even on graphs with fewer than four nodes.
        """
        mode = IdMode(mode)
        lg = log2ceil(g.n)
        c = 1
        if mode == IdMode.HYBRID0:
            c = g.meta.get("id_exponent") or max(
                1, math.ceil(math.log(max(g.node_ids) + 1) / math.log(max(g.n, 2)))
            )
        cap = lg if cap is None else cap
        return cls(
            n=g.n,
            global_msg_size=c_bits * c * max(2, lg),
            global_send_cap=cap,
            global_recv_cap=cap,
            id_mode=mode,
            id_exponent=c,
            overflow_policy=Overflow(overflow),
            local_limit=local_limit,
        )

    @property
    def gamma_bits(self) -> int:
        """Global bits a node may send per round (γ in the bit accounting)."""
        return self.global_send_cap * self.global_msg_size


def payload_bits(p) -> int:
    """Size of a payload: integers by bit length, containers by their parts."""
    if p is None:
        return 0
    if isinstance(p, bool):
        return 1
    if isinstance(p, int):
        return max(1, p.bit_length() + (1 if p < 0 else 0))
    if isinstance(p, float):
        return 64
    if isinstance(p, (bytes, bytearray)):
        return 8 * len(p)
    if isinstance(p, str):
        return 8 * len(p.encode())
    if isinstance(p, dict):
        return sum(payload_bits(k) + payload_bits(v) for k, v in p.items())
    if isinstance(p, (tuple, list, frozenset, set)):
        return sum(payload_bits(x) for x in p)
    raise TypeError(f"cannot size payload of type {type(p).__name__}")


def _ints(p):
    if isinstance(p, bool):
        return
    if isinstance(p, int):
        yield p
    elif isinstance(p, (tuple, list, frozenset, set)):
        for x in p:
            yield from _ints(x)
    elif isinstance(p, dict):
        for k, v in p.items():
            yield from _ints(k)
            yield from _ints(v)


class Transcript:
    """Execution record: round count, message counters, caps observed,
    violations and declared outputs."""

    def __init__(self, n: int):
        self.n = n
        self.rounds = 0
        self.local_msgs = array("q")
        self.local_bits = array("q")
        self.global_msgs = array("q")
        self.global_bits = array("q")
        self.max_send = [0] * n
        self.max_recv = [0] * n
        self.violations: list[dict] = []
        self.dropped = 0
        self.outputs: dict = {}
        self.halted = False
        self.budget_exhausted = False
        self.phases: dict[str, int] = {}

    def record(self, lmsgs, lbits, gmsgs, gbits):
        self.rounds += 1
        self.local_msgs.append(lmsgs)
        self.local_bits.append(lbits)
        self.global_msgs.append(gmsgs)
        self.global_bits.append(gbits)

    @property
    def total_local(self) -> int:
        return sum(self.local_msgs)

    @property
    def total_global(self) -> int:
        return sum(self.global_msgs)

    def summary(self) -> dict:
        return {
            "rounds": self.rounds,
            "local_messages": self.total_local,
            "local_bits": sum(self.local_bits),
            "global_messages": self.total_global,
            "global_bits": sum(self.global_bits),
            "max_global_sends": max(self.max_send, default=0),
            "max_global_receives": max(self.max_recv, default=0),
            "violations": len(self.violations),
            "dropped": self.dropped,
            "halted": self.halted,
            "budget_exhausted": self.budget_exhausted,
            "phases": dict(self.phases),
        }

    def to_json(self) -> str:
        doc = self.summary()
        doc["violation_log"] = self.violations
        doc["per_round"] = {
            "local_messages": list(self.local_msgs),
            "global_messages": list(self.global_msgs),
        }
        return json.dumps(doc, sort_keys=True)

    def to_csv(self) -> str:
        s = self.summary()
        keys = [k for k in s if k != "phases"]
        return ",".join(keys) + "\n" + ",".join(str(s[k]) for k in keys) + "\n"


class HybridNetwork:
    """Message queues, delivery and capacity accounting for one execution."""

    def __init__(self, g: Graph, cfg: ModelConfig | None = None, seed: int = 0):
        self.g = g
        self.cfg = cfg or ModelConfig.for_graph(g)
        if self.cfg.n != g.n:
            raise ConfigurationError("config was built for a different node count")
        self.seed = seed
        self.n = g.n
        self.ids = g.node_ids
        self.index = {x: i for i, x in enumerate(self.ids)}
        if self.cfg.id_mode == IdMode.HYBRID and sorted(self.ids) != list(range(g.n)):
            raise ConfigurationError("HYBRID mode needs ids exactly 0..n-1")
        self.lg = log2ceil(g.n)
        self.transcript = Transcript(g.n)
        self._local: list = []
        self._global: list = []
        self._seq = 0
        self._rngs: dict[int, np.random.Generator] = {}
        self.known = None
        if self.cfg.id_mode == IdMode.HYBRID0:
            self.known = [
                {self.ids[v]} | {self.ids[u] for u in g.adjacency[v]} for v in range(g.n)
            ]
        self._flood_radius = 0
        self._flood_cur = [1 << v for v in range(g.n)]
        self._flood_saved = {0: list(self._flood_cur)}
        self._flood_cost: list[tuple[int, int]] = []
        self._flood_fixed = g.n == 1
        self.cache: dict = {}

    @property
    def round(self) -> int:
        return self.transcript.rounds

    @property
    def hybrid0(self) -> bool:
        return self.cfg.id_mode == IdMode.HYBRID0

    def rng(self, v: int) -> np.random.Generator:
        """Counter-based generator private to node v, keyed by (seed, id)."""
        r = self._rngs.get(v)
        if r is None:
            ss = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.ids[v] & 0xFFFFFFFFFFFF])
            r = np.random.Generator(np.random.Philox(ss))
            self._rngs[v] = r
        return r

    def knows(self, v: int, node_id: int) -> bool:
        return self.known is None or node_id in self.known[v]

    # sending

    def send_local(self, u: int, v: int, payload=None):
        if v not in self.g.adjacency[u] and v != u:
            raise ModelError(f"local send from {u} to non-neighbour {v}")
        limit = self.cfg.local_limit
        bits = payload_bits(payload)
        if limit is not None and bits > limit:
            raise ModelError(f"local payload of {bits} bits exceeds λ={limit}")
        self._seq += 1
        self._local.append((u, v, self._seq, payload, bits))

    def send_global(self, u: int, to_id: int, payload=None):
        v = self.index.get(to_id)
        if v is None:
            raise ModelError(f"global send from {u} to nonexistent id {to_id}")
        if self.known is not None and to_id not in self.known[u]:
            raise ModelError(f"node {self.ids[u]} sends to unknown id {to_id} in HYBRID0")
        bits = payload_bits(payload)
        if bits > self.cfg.global_msg_size:
            raise ModelError(
                f"global payload of {bits} bits exceeds {self.cfg.global_msg_size}"
            )
        self._seq += 1
        self._global.append((u, v, self._seq, payload, bits))

    def send_global_to(self, u: int, v: int, payload=None):
        """Convenience: address by node index."""
        self.send_global(u, self.ids[v], payload)

    # delivery

    def _violation(self, kind, node, count, cap):
        self.transcript.violations.append(
            {"round": self.round + 1, "kind": kind, "node": self.ids[node], "count": count, "cap": cap}
        )
        if self.cfg.overflow_policy == Overflow.FAIL:
            raise CapViolation(
                f"round {self.round + 1}: node {self.ids[node]} {kind} {count} global messages, cap {cap}"
            )

    def advance(self):
        """End the current round. Returns (local_inbox, global_inbox), each a
        list indexed by node of [(sender index, payload)] in delivery order."""
        cfg, t = self.cfg, self.transcript
        glob = self._global
        self._global = []
        by_src = defaultdict(list)
        for msg in glob:
            by_src[msg[0]].append(msg)
        kept = []
        for u, msgs in by_src.items():
            if len(msgs) > cfg.global_send_cap:
                self._violation("sent", u, len(msgs), cfg.global_send_cap)
                t.dropped += len(msgs) - cfg.global_send_cap
                msgs = msgs[: cfg.global_send_cap]
            t.max_send[u] = max(t.max_send[u], len(msgs))
            kept.extend(msgs)
        by_dst = defaultdict(list)
        for msg in kept:
            by_dst[msg[1]].append(msg)
        g_in = [[] for _ in range(self.n)]
        gbits = gcount = 0
        for v, msgs in by_dst.items():
            msgs.sort(key=lambda m: (self.ids[m[0]], m[2]))
            if len(msgs) > cfg.global_recv_cap:
                self._violation("received", v, len(msgs), cfg.global_recv_cap)
                t.dropped += len(msgs) - cfg.global_recv_cap
                msgs = msgs[: cfg.global_recv_cap]
            t.max_recv[v] = max(t.max_recv[v], len(msgs))
            for u, _, _, p, b in msgs:
                g_in[v].append((u, p))
                gbits += b
            gcount += len(msgs)
        loc = self._local
        self._local = []
        l_in = [[] for _ in range(self.n)]
        lbits = 0
        loc.sort(key=lambda m: (self.ids[m[0]], m[2]))
        for u, v, _, p, b in loc:
            l_in[v].append((u, p))
            lbits += b
        if self.known is not None:
            for inbox in (l_in, g_in):
                for v, msgs in enumerate(inbox):
                    for u, p in msgs:
                        kv = self.known[v]
                        kv.add(self.ids[u])
                        for x in _ints(p):
                            if x in self.index:
                                kv.add(x)
        t.record(len(loc), lbits, gcount, gbits)
        return l_in, g_in

    def idle(self, rounds: int, local_msgs: int = 0, local_bits: int = 0):
        """Rounds in which only local traffic of the given total volume flows."""
        if self._local or self._global:
            raise RuntimeError("idle() with queued messages; call advance()")
        for i in range(rounds):
            m = local_msgs if i == 0 else 0
            b = local_bits if i == 0 else 0
            self.transcript.record(m, b, 0, 0)

    @contextmanager
    def phase(self, name: str):
        start = self.round
        try:
            yield
        finally:
            self.transcript.phases[name] = self.transcript.phases.get(name, 0) + self.round - start

    def learn(self, v: int, ids):
        """Record ids that node v learned through a flood."""
        if self.known is not None:
            self.known[v].update(ids)

    # neighbourhood learning

    def balls(self, radius: int) -> list[int]:
        """Bitsets of B_radius(v) for every v, without charging rounds."""
        saved = self._flood_saved
        if radius in saved:
            return saved[radius]
        if self._flood_fixed and radius >= self._flood_radius:
            return self._flood_cur
        if radius < self._flood_radius:
            cur = [1 << v for v in range(self.n)]
            for _ in range(radius):
                cur = self._flood_step(cur)[0]
        else:
            while self._flood_radius < radius and not self._flood_fixed:
                nxt, msgs, bits = self._flood_step(self._flood_cur)
                self._flood_cost.append((msgs, bits))
                self._flood_fixed = msgs == 0
                self._flood_cur = nxt
                self._flood_radius += 1
            cur = self._flood_cur
        saved[radius] = cur
        if len(saved) > 8:
            for key in sorted(saved)[1:-6]:
                del saved[key]
        return cur

    def _flood_step(self, cur):
        adj = self.g.adjacency
        nxt = list(cur)
        for v in range(self.n):
            acc = cur[v]
            for u in adj[v]:
                acc |= cur[u]
            nxt[v] = acc
        # each node forwards to all neighbours whatever it learned this round
        msgs = bits = 0
        for v in range(self.n):
            new = nxt[v] & ~cur[v]
            if new:
                msgs += len(adj[v])
                bits += new.bit_count() * self.lg * len(adj[v])
        return nxt, msgs, bits

    def flood(self, radius: int, start: int = 0) -> list[int]:
        """Run ``radius`` rounds of neighbourhood flooding.

        Afterwards node v knows the ids and current states of exactly the
        nodes in B_radius(v), returned as bitsets. Local traffic is charged as
        one message per edge direction per round while a node still has news.
        With ``start`` > 0 the first ``start`` rounds are taken as already
        done (continuing an earlier flood) and only the rest are charged.
        """
        if radius < 0 or not 0 <= start <= radius:
            raise ValueError("need 0 <= start <= radius")
        if self._local or self._global:
            raise RuntimeError("flood() with queued messages; call advance()")
        result = self.balls(radius)
        for i in range(start, radius):
            m, b = self._flood_cost[i] if i < len(self._flood_cost) else (0, 0)
            self.transcript.record(m, b, 0, 0)
        if self.known is not None and radius > 0:
            for v in range(self.n):
                self.known[v].update(self.ids[u] for u in iter_bits(result[v]))
        return result


def iter_bits(x: int):
    """Indices of the set bits of x in increasing order."""
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


class NodeContext:
    """What one node sees inside :func:`execute`."""

    __slots__ = ("_net", "index", "id", "neighbors", "state", "input", "_halted", "_prog")

    def __init__(self, net: HybridNetwork, v: int, inp):
        self._net = net
        self.index = v
        self.id = net.ids[v]
        self.neighbors = tuple(net.ids[u] for u in net.g.adjacency[v])
        self.state: dict = {}
        self.input = inp
        self._halted = False

    @property
    def n(self) -> int:
        return self._net.n

    @property
    def cfg(self) -> ModelConfig:
        return self._net.cfg

    @property
    def round(self) -> int:
        return self._net.round + 1

    @property
    def rng(self) -> np.random.Generator:
        return self._net.rng(self.index)

    def send_local(self, neighbor_id: int, payload=None):
        self._net.send_local(self.index, self._net.index[neighbor_id], payload)

    def send_global(self, to_id: int, payload=None):
        self._net.send_global(self.index, to_id, payload)

    def output(self, value):
        self._net.transcript.outputs[self.id] = value

    def halt(self):
        self._halted = True


class NodeProgram:
    """Per-node algorithm. Subclasses implement ``on_round``; ``init`` may
    set up ``ctx.state`` from ``ctx.input``. Inboxes hold (sender id, payload)."""

    def init(self, ctx: NodeContext):
        pass

    def on_round(self, ctx: NodeContext, local_inbox, global_inbox):
        raise NotImplementedError


def execute(
    g: Graph,
    cfg: ModelConfig | None,
    program: NodeProgram,
    round_budget: int,
    seed: int = 0,
    inputs: dict | None = None,
    raise_on_budget: bool = False,
) -> Transcript:
    """Run ``program`` in lock-step until every node halts or the budget ends.

    At least one round always runs. Inputs (keyed by node index) are placed in
    node state before round 1.
    """
    if round_budget < 1:
        raise ConfigurationError("round budget must be at least 1")
    net = HybridNetwork(g, cfg, seed)
    inputs = inputs or {}
    ctxs = [NodeContext(net, v, inputs.get(v)) for v in range(g.n)]
    for c in ctxs:
        program.init(c)
    ids = net.ids
    l_in = [[] for _ in range(g.n)]
    g_in = [[] for _ in range(g.n)]
    while net.round < round_budget:
        for c in ctxs:
            if not c._halted:
                program.on_round(
                    c,
                    [(ids[u], p) for u, p in l_in[c.index]],
                    [(ids[u], p) for u, p in g_in[c.index]],
                )
        l_in, g_in = net.advance()
        if all(c._halted for c in ctxs):
            net.transcript.halted = True
            break
    else:
        net.transcript.budget_exhausted = not all(c._halted for c in ctxs)
    if net.transcript.budget_exhausted and raise_on_budget:
        raise BudgetExhausted(f"round budget {round_budget} exhausted")
    return net.transcript
