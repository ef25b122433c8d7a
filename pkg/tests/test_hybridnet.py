import pytest

from hybridsim import graphcore as gc
from hybridsim.hybridnet import (
    CapViolation,
    HybridNetwork,
    ModelConfig,
    ModelError,
    NodeProgram,
    Overflow,
    execute,
)


class HaltNow(NodeProgram):
    def on_round(self, ctx, local_inbox, global_inbox):
        ctx.halt()


class Flood(NodeProgram):
    def init(self, ctx):
        ctx.state["have"] = ctx.input == "start"
        ctx.state["sent"] = False

    def on_round(self, ctx, local_inbox, global_inbox):
        if local_inbox:
            ctx.state["have"] = True
        if ctx.state["have"] and not ctx.state["sent"]:
            for u in ctx.neighbors:
                ctx.send_local(u, 1)
            ctx.state["sent"] = True
            ctx.output(ctx.round)
            ctx.halt()


def test_immediate_halt_takes_one_round():
    t = execute(gc.path(4), None, HaltNow(), 10)
    assert t.rounds == 1
    assert t.halted


def test_flooding_path_takes_diameter_plus_one():
    g = gc.path(16)
    t = execute(g, None, Flood(), 100, inputs={0: "start"})
    assert t.rounds == 16
    # the far endpoint hears the token D = 15 rounds after the start
    assert t.outputs[15] - t.outputs[0] == 15


def test_send_cap_violation_raises():
    g = gc.complete(8)
    cfg = ModelConfig.for_graph(g)
    net = HybridNetwork(g, cfg)
    for v in range(1, cfg.global_send_cap + 2):
        net.send_global(0, v, 1)
    with pytest.raises(CapViolation):
        net.advance()


def test_drop_policy_records_violation():
    g = gc.complete(8)
    cfg = ModelConfig.for_graph(g, overflow=Overflow.DROP_ARBITRARY)
    net = HybridNetwork(g, cfg)
    for v in range(1, cfg.global_send_cap + 2):
        net.send_global(0, v, 1)
    net.advance()
    assert net.transcript.violations


def test_large_local_payload_accepted():
    net = HybridNetwork(gc.path(3))
    net.send_local(0, 1, 1 << 1_000_000)
    l_in, _ = net.advance()
    assert l_in[1][0][0] == 0


def test_oversized_global_payload_rejected():
    g = gc.path(8)
    net = HybridNetwork(g)
    with pytest.raises(ModelError):
        net.send_global(0, 5, 1 << (net.cfg.global_msg_size + 1))


def test_receive_cap_exactly_met():
    g = gc.complete(16)
    cfg = ModelConfig.for_graph(g)
    net = HybridNetwork(g, cfg)
    cap = cfg.global_recv_cap
    for v in range(1, cap + 1):
        net.send_global(v, 0, v)
    _, g_in = net.advance()
    assert sorted(p for _, p in g_in[0]) == list(range(1, cap + 1))
    assert not net.transcript.violations


def test_local_send_to_non_neighbour():
    net = HybridNetwork(gc.path(4))
    with pytest.raises(ModelError):
        net.send_local(0, 3, 1)


def test_hybrid0_unknown_id():
    g = gc.with_random_ids(gc.path(6), seed=1)
    net = HybridNetwork(g, ModelConfig.for_graph(g, "hybrid0"))
    far = g.node_ids[5]
    with pytest.raises(ModelError):
        net.send_global(0, far, 1)


def test_rng_is_per_node_and_reproducible():
    g = gc.path(5)
    a, b = HybridNetwork(g, seed=3), HybridNetwork(g, seed=3)
    assert a.rng(2).random() == b.rng(2).random()
    assert HybridNetwork(g, seed=3).rng(1).random() != HybridNetwork(g, seed=3).rng(2).random()


def test_flood_balls_match_oracle():
    g = gc.grid(2, 6)
    net = HybridNetwork(g)
    balls = net.flood(3)
    for v in range(g.n):
        assert {u for u in range(g.n) if balls[v] >> u & 1} == gc.ball(g, v, 3)
    assert net.round == 3
