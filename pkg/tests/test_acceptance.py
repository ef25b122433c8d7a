"""Acceptance suite: one test per criterion, plus one PASS/FAIL line each.

Each criterion records a verdict with ``_verdict``; the line is printed
immediately and again in the terminal summary (see conftest.py). Where a
criterion splits into an attainable part and a literal part that cannot
hold, the two are separate tests so that the failure is isolated.
"""
import math
import random

import numpy as np
import pytest

from conftest import ACCEPTANCE
from hybridsim import cli
from hybridsim import dissemination as ds
from hybridsim import eulertools as et
from hybridsim import graphcore as gc
from hybridsim import routing as rt
from hybridsim import shortestpaths as sp
from hybridsim.hybridnet import HybridNetwork, ModelConfig, Overflow
from hybridsim.nq import cluster_partition, nq_graph, nq_profile

SEEDS = range(20)


def _verdict(num, ok, detail):
    prev = ACCEPTANCE.get(num)
    if prev is not None:
        ok = ok and prev[0]
        detail = f"{prev[1]}; {detail}"
    ACCEPTANCE[num] = (bool(ok), detail)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


def brute_nq(g, k):
    """Independent oracle: max over v of the smallest t with t·|B_t(v)| >= k, capped at D."""
    D = gc.diameter(g)
    best = 1
    for v in range(g.n):
        t = 1
        while t < D and t * len(gc.ball(g, v, t)) < k:
            t += 1
        best = max(best, min(t, D))
    return best


def _band(k, D):
    lo = max(1, math.isqrt(k) - 1)
    hi = min(D, math.isqrt(k - 1) + 2)  # ceil(sqrt k) + 1
    return lo, hi


def _line_ks(n):
    return sorted({1, 2, 3, 5, 8, 13, 20, 40, 77, 150, 300, 600, n // 2, n, 2 * n})


# 1. closed forms


def test_criterion1_paths_and_grids():
    bad = []
    checked = 0
    for n in (16, 33, 64, 128, 200):
        g = gc.path(n)
        D = n - 1
        for k in _line_ks(n):
            if k > D * D + D:
                continue
            got = nq_profile(g, k).value
            lo, hi = _band(k, D)
            checked += 1
            if got != brute_nq(g, k) or not lo <= got <= hi:
                bad.append(("path", n, k, got))
    # the distributed evaluation agrees with the oracle
    for n, k in ((64, 20), (100, 36), (128, 300)):
        g = gc.path(n)
        if nq_graph(g, k, "distributed", HybridNetwork(g)).value != nq_profile(g, k).value:
            bad.append(("distributed", n, k))
    ratios = []
    for m in (6, 10, 16, 24, 32):
        g = gc.grid(2, m)
        for k in sorted({2, 8, 32, 128, 512, 2048, int(g.n ** 1.5)}):
            if k > g.n ** 1.5:
                continue
            ratios.append(nq_profile(g, min(k, g.n)).value / k ** (1 / 3) if k <= g.n else None)
    ratios = [r for r in ratios if r is not None]
    grid_ok = all(0.3 <= r <= 3.0 for r in ratios)
    ok = not bad and grid_ok
    _verdict(1, ok, f"paths {checked} instances, {len(bad)} off; grid NQ/k^(1/3) in [{min(ratios):.2f}, {max(ratios):.2f}]")
    assert not bad
    assert grid_ok


def test_criterion1_cycles_literal_band():
    # Literal band on cycles; NQ on a cycle tracks sqrt(k/2), see the ledger.
    bad = []
    checked = 0
    for n in (16, 32, 64, 128):
        g = gc.cycle(n)
        D = n // 2
        for k in _line_ks(n):
            if k > D * D + D:
                continue
            got = nq_profile(g, k).value
            assert got == brute_nq(g, k)
            lo, hi = _band(k, D)
            checked += 1
            if not lo <= got <= hi:
                bad.append((n, k, got))
    _verdict(1, not bad, f"cycles {checked} instances, {len(bad)} outside the band, e.g. {bad[:3]}")
    assert not bad


# 2. bounds


def _sweep_graphs():
    out = [gc.path(n) for n in (32, 100, 256)]
    out += [gc.cycle(n) for n in (40, 128)]
    out += [gc.grid(2, m) for m in (8, 16)]
    out += [gc.grid(3, 6), gc.star(50), gc.complete(30)]
    out += [gc.random_tree(200, s) for s in range(3)]
    out += [gc.erdos_renyi(150, 0.03, s) for s in range(3)]
    return out


def _ks(n):
    return [k for k in (1, 2, 3, 4, 7, 16, 30, 64, 100, 256) if k <= n]


def test_criterion2_lower_bound_and_growth():
    bad = []
    count = 0
    for g in _sweep_graphs():
        D, n = gc.diameter(g), g.n
        for k in _ks(n):
            nq = nq_profile(g, k).value
            count += 1
            if not math.sqrt(D * k / (3 * n)) < nq <= D:
                bad.append((g.meta.get("kind"), n, k, nq, "range"))
            if 4 * k <= n and nq_profile(g, 4 * k).value > 12 * nq:
                bad.append((g.meta.get("kind"), n, k, nq, "growth"))
    _verdict(2, not bad, f"{count} instances: lower bound, <= D and NQ_4k <= 12 NQ_k with {len(bad)} violations")
    assert not bad


def test_criterion2_sqrt_k_literal():
    # NQ is an integer while sqrt(k) is not; the literal bound breaks (see ledger).
    bad = []
    for g in _sweep_graphs():
        for k in _ks(g.n):
            nq = nq_profile(g, k).value
            if nq > math.sqrt(k):
                bad.append((g.meta.get("kind"), g.n, k, nq))
    _verdict(2, not bad, f"NQ <= sqrt(k): {len(bad)} violations, e.g. {bad[:2]}")
    assert not bad


# 3. clustering


def test_criterion3_clustering():
    bad = []
    runs = 0
    cases = [(gc.path(256), (16, 64, 200)), (gc.grid(2, 16), (8, 64, 256)), (gc.cycle(300), (30, 150))]
    cases += [(gc.erdos_renyi(200, 0.02, s), (20, 100)) for s in range(2)]
    for g, ks in cases:
        hops = gc.hop_matrix(g)
        lg = gc.log2ceil(g.n)
        for k in ks:
            for seed in SEEDS:
                cl = cluster_partition(g, k, "in_model", HybridNetwork(g, seed=seed))
                runs += 1
                assert cl.nq == nq_profile(g, k).value
                covered = sorted(v for m in cl.members for v in m) == list(range(g.n))
                sizes = all(k / cl.nq <= len(m) <= 2 * k / cl.nq for m in cl.members)
                diam = max(int(hops[np.ix_(m, m)].max()) for m in cl.members)
                if not (covered and sizes and diam <= 4 * cl.nq * lg):
                    bad.append((g.meta.get("kind"), g.n, k, seed))
    _verdict(3, not bad, f"{runs} runs, {len(bad)} invalid partitions")
    assert not bad


# 4. and 5. dissemination


def _diss_rows(graphs, ks, seeds):
    rows = []
    for g in graphs:
        for k in ks:
            if k > 4 * g.n:
                continue
            nq = nq_profile(g, min(k, g.n)).value
            for seed in seeds:
                cfg = ModelConfig.for_graph(g, overflow=Overflow.FAIL)
                net = HybridNetwork(g, cfg, seed)
                ts = ds.TokenSet.uniform(net.ids, k, seed=seed)
                res = ds.k_disseminate(net, ts)
                rows.append(
                    {
                        "n": g.n, "k": k, "nq": nq, "seed": seed, "rounds": res.rounds,
                        "complete": res.complete(ts.all_items()),
                        "violations": len(net.transcript.violations),
                        "kind": g.meta.get("kind"),
                    }
                )
    return rows


C_DISS = 8.0


@pytest.fixture(scope="module")
def diss_rows():
    graphs = [gc.path(n) for n in (64, 128, 256)] + [gc.cycle(n) for n in (64, 128, 256)]
    graphs += [gc.grid(2, m) for m in (8, 12, 16)]
    return _diss_rows(graphs, (4, 16, 64, 256), SEEDS)


def test_criterion4_dissemination(diss_rows):
    rows = diss_rows
    complete = all(r["complete"] for r in rows)
    violations = sum(r["violations"] for r in rows)
    ratios = [r["rounds"] / (r["nq"] * math.log2(r["n"]) ** 3) for r in rows]
    fit = cli.fit_scaling(rows, "NQ_k")
    ok = complete and violations == 0 and max(ratios) <= C_DISS and 0.8 <= fit.exponent <= 1.2
    _verdict(
        4, ok,
        f"{len(rows)} runs, complete={complete}, cap violations={violations}, "
        f"rounds/(NQ log^3 n) in [{min(ratios):.2f}, {max(ratios):.2f}] <= {C_DISS}, "
        f"fitted NQ exponent {fit.exponent:.3f} (log exponent {fit.log_exponent:.2f})",
    )
    assert complete and violations == 0
    assert max(ratios) <= C_DISS
    assert 0.8 <= fit.exponent <= 1.2


def test_criterion5_grid_separation():
    details = []
    ok = True
    for m in (16, 24, 32):
        g = gc.grid(2, m)
        ks = [k for k in (8, 16, 32, 64, 128, 256, 512, 1024) if k <= g.n]
        rows = _diss_rows([g], ks, SEEDS)
        by_k = {}
        for r in rows:
            by_k.setdefault(r["k"], []).append(r)
        pts = [
            {"n": g.n, "k": k, "nq": rs[0]["nq"], "rounds": float(np.mean([r["rounds"] for r in rs]))}
            for k, rs in sorted(by_k.items())
        ]
        k_fit = cli.fit_scaling(pts, "k")
        nq_fit = cli.fit_scaling(pts, "NQ_k")
        sq_fit = cli.fit_scaling(pts, "sqrt_k", log_exponent=0)
        sq_res = math.sqrt(np.mean([(math.log(p["rounds"]) - math.log(sq_fit.constant * math.sqrt(p["k"]))) ** 2 for p in pts]))
        this = 1 / 3 - 0.15 <= k_fit.exponent <= 1 / 3 + 0.15 and nq_fit.residual < sq_res
        ok = ok and this and all(r["complete"] for r in rows)
        details.append(f"grid{m}: k-exponent {k_fit.exponent:.3f}, NQ residual {nq_fit.residual:.3f} vs sqrt(k) residual {sq_res:.3f}")
    _verdict(5, ok, "; ".join(details))
    assert ok


# 6. routing


def _routing_cases():
    g = gc.grid(2, 16)
    p = gc.path(256)
    return [
        (g, rt.ARB_RAND, 48, 3),
        (p, rt.ARB_RAND, 32, 4),
        (g, rt.RAND_ARB, 3, 48),
        (p, rt.RAND_ARB, 4, 32),
        (g, rt.RAND_RAND, 16, 16),
        (g, rt.RAND_RAND, 96, 3),
        (p, rt.RAND_RAND, 24, 8),
    ]


def test_criterion6_routing():
    runs = exact = load_ok = 0
    membership_bad = []
    constraint_flags = []
    for g, scenario, k, ell in _routing_cases():
        lg = gc.log2ceil(g.n)
        for seed in SEEDS:
            net = HybridNetwork(g, seed=seed)
            inst = rt.RoutingInstance.sample(g.n, scenario, k, ell, seed)
            res = rt.kl_route(net, inst, seed=seed)
            runs += 1
            constraint_flags += res.stats["flags"]
            exact += res.exact(inst)
            subs = res.stats.get("sub_stats") or [res.stats]
            good = True
            for st in subs:
                for key in ("helpers_t", "helpers_s"):
                    ha = st.get(key)
                    if ha is not None and ha.max_membership > rt.MEMBERSHIP_CONSTANT * lg:
                        membership_bad.append((scenario, seed, ha.max_membership))
                cert = st.get("hash", {})
                good = good and cert.get("max_load", 0) <= cert.get("bound", math.inf)
            load_ok += good
    ok = exact == runs and not membership_bad and load_ok >= 0.99 * runs and not constraint_flags
    _verdict(
        6, ok,
        f"{runs} runs over three scenarios: exact {exact}/{runs}, membership over c_m log n: {len(membership_bad)}, "
        f"load within bound {load_ok}/{runs}",
    )
    assert not constraint_flags
    assert exact == runs
    assert not membership_bad
    assert load_ok >= 0.99 * runs


# 7. stretch


def _stretch_graphs(seed):
    return [
        gc.grid(2, 12),
        gc.path(150),
        gc.erdos_renyi(160, 0.03, seed),
        gc.random_tree(128, seed),
    ]


def _run_stretch(name, g, seed):
    if name == "apsp_unweighted":
        return sp.apsp_unweighted(HybridNetwork(g, seed=seed), 0.5)
    w = gc.with_random_weights(g, seed)
    net = HybridNetwork(w, seed=seed)
    if name == "spanner":
        return sp.apsp_weighted_spanner(net, 0.5, seed)
    if name.startswith("skeleton"):
        return sp.apsp_weighted_skeleton(net, int(name[-1]), seed=seed)
    S = sorted(int(v) for v in np.random.default_rng(seed).choice(g.n, 8, replace=False))
    return sp.k_ssp(net, S, 0.5, name.split("_")[-1], seed=seed)


DETERMINISTIC = {"apsp_unweighted", "spanner"}
STRETCH_ALGOS = ["apsp_unweighted", "spanner", "skeleton_1", "skeleton_2", "kssp_random", "kssp_arbitrary"]


def _evaluate(name, g, seed):
    est = _run_stretch(name, g, seed)
    target = g if name == "apsp_unweighted" else gc.with_random_weights(g, seed)
    return est, est.evaluate(target)


def test_criterion7_stretch():
    failures = {a: [] for a in STRETCH_ALGOS}
    seeds_run = {a: 0 for a in STRETCH_ALGOS}
    declared_ok = True
    worst = {a: 1.0 for a in STRETCH_ALGOS}
    for seed in SEEDS:
        for gi, g in enumerate(_stretch_graphs(seed)):
            for name in STRETCH_ALGOS:
                est, ev = _evaluate(name, g, seed)
                # the declared stretch must be the stated formula
                if name == "apsp_unweighted":
                    declared_ok &= est.stretch == 1 + 3 * 0.5 + 0.25
                elif name == "spanner":
                    declared_ok &= est.stretch == 2 * math.ceil(0.5 * math.log2(g.n) / 2) - 1
                elif name.startswith("skeleton"):
                    declared_ok &= est.stretch == 4 * int(name[-1]) - 1
                else:
                    declared_ok &= est.stretch == (1.5 if name.endswith("random") else 3.5)
                seeds_run[name] += 1
                worst[name] = max(worst[name], ev["max_ratio"])
                if ev["violations"] or ev["underestimates"]:
                    failures[name].append((gi, seed))
    # a failing seed must reproduce exactly
    reproducible = True
    for name, fails in failures.items():
        for gi, seed in fails:
            g = _stretch_graphs(seed)[gi]
            a, _ = _evaluate(name, g, seed)
            b, _ = _evaluate(name, g, seed)
            reproducible &= bool(np.array_equal(a.values, b.values))
    det_ok = all(not failures[a] for a in DETERMINISTIC)
    whp_ok = all(len(failures[a]) <= 0.01 * seeds_run[a] for a in STRETCH_ALGOS if a not in DETERMINISTIC)
    ok = det_ok and whp_ok and reproducible and declared_ok
    summary = ", ".join(f"{a} worst {worst[a]:.3f} fails {len(failures[a])}/{seeds_run[a]}" for a in STRETCH_ALGOS)
    _verdict(7, ok, summary)
    assert declared_ok
    assert det_ok
    assert whp_ok
    assert reproducible


def test_criterion7_at_512():
    g = gc.grid(2, 22)  # 484 nodes
    ok = True
    parts = []
    for name in STRETCH_ALGOS:
        _, ev = _evaluate(name, g, 0)
        good = ev["violations"] == 0 and ev["underestimates"] == 0
        ok = ok and good
        parts.append(f"{name} {ev['max_ratio']:.3f}")
    _verdict(7, ok, "n=484: " + ", ".join(parts))
    assert ok


# 8. Eulerian machinery


def _even_instances():
    out = []
    for s in range(6):
        for g in (gc.grid(2, 8), gc.erdos_renyi(60, 0.1, s), gc.complete(7), gc.grid(3, 4)):
            H = cli._even_subgraph(g, s)
            out.append((g, H, None))
    out.append((gc.complete(5), gc.complete(5).edges(), None))
    out.append((gc.cycle(200), gc.cycle(200).edges(), None))
    # virtual nodes: each real node gets an even number of virtual edges
    g = gc.grid(2, 6)
    ring = [(i, i + 1) for i in range(5)] + [(30 + i, 31 + i) for i in range(5)]
    ring += [(6 * i, 6 * i + 6) for i in range(5)] + [(5 + 6 * i, 11 + 6 * i) for i in range(5)]
    out.append((g, ring, et.VirtualNodeSet(2, [(a, r) for a in (0, 1) for r in (7, 8, 14, 21)])))
    out.append((g, ring, et.VirtualNodeSet(2, [(a, r) for a in (0, 1) for r in (7, 8, 14)], [(0, 1)])))
    out.append((g, ring, et.VirtualNodeSet(3, [(0, 7), (0, 8), (1, 8), (1, 9), (2, 9), (2, 7)])))
    return out


def _random_minor_spec(rng):
    n = rng.randint(1, 14)
    kind = rng.random()
    if kind < 0.3:
        g = gc.path(n)
    elif kind < 0.5:
        g = gc.cycle(max(3, n))
    elif kind < 0.7:
        g = gc.random_tree(n, rng.randrange(1 << 30))
    else:
        g = gc.erdos_renyi(n, 0.35, rng.randrange(1 << 30))
    p = rng.random()
    flags = {e for e in g.edges() if rng.random() < p}
    lg = gc.log2ceil(g.n)
    x = [rng.randrange(1 << max(1, lg)) for _ in range(g.n)]
    ops = list(et.OPERATORS)
    spec = et.MinorRoundSpec(flags, x, rng.choice(["min", "max"]), rng.choice(ops))
    return g, spec


def test_criterion8_euler():
    balanced = 0
    instances = _even_instances()
    for g, H, vs in instances:
        cap = max(gc.log2ceil(g.n), g.max_degree(), 1)
        net = HybridNetwork(g, ModelConfig.for_graph(g, cap=cap), 0)
        o = et.eulerian_orientation(net, H, vs)
        expected = len(H) + (len(vs.real_edges) + len(vs.virtual_edges) if vs else 0)
        balanced += o.is_eulerian() and len(o.heads) == expected

    rng = random.Random(2024)
    mismatches = 0
    specs = 10_000
    for i in range(specs):
        g, spec = _random_minor_spec(rng)
        cap = max(gc.log2ceil(g.n), g.max_degree(), 1)
        net = HybridNetwork(g, ModelConfig.for_graph(g, cap=cap), i)
        res = et.minor_round(net, spec)
        mismatches += (res.supernode, res.y, res.agg) != et.minor_round_reference(g, spec)

    c_iter = 2
    cyc_ok = True
    worst_shrink = 0.0
    worst_iter = 0.0
    for s in range(20):
        r = random.Random(s)
        edges = []
        start = 0
        for _ in range(r.randint(1, 5)):
            L = r.choice([2, 3, 5, 64, 500, 3000])
            nodes = list(range(start, start + L))
            r.shuffle(nodes)
            edges += [(nodes[i], nodes[(i + 1) % L]) for i in range(L)]
            start += L
        o = et.orient_cycles(edges)
        sizes = o.stats["sizes"]
        per_step = all(b <= 2 / 3 * a for a, b in zip(sizes, sizes[1:]))
        lim = c_iter * math.log2(max(start, 2))
        cyc_ok = cyc_ok and o.is_eulerian() and per_step and o.stats["iterations"] <= lim
        worst_shrink = max(worst_shrink, o.stats["max_shrink"])
        worst_iter = max(worst_iter, o.stats["iterations"] / math.log2(max(start, 2)))
    ok = balanced == len(instances) and mismatches == 0 and cyc_ok
    _verdict(
        8, ok,
        f"balanced {balanced}/{len(instances)}, minor_round mismatches {mismatches}/{specs}, "
        f"orient_cycles max shrink {worst_shrink:.3f}, iterations/log2 n <= {worst_iter:.2f} (c={c_iter})",
    )
    assert balanced == len(instances)
    assert mismatches == 0
    assert cyc_ok


# 9. reductions


def test_criterion9_reductions():
    same = total = 0
    for g in (gc.path(64), gc.grid(2, 8), gc.cycle(100), gc.random_tree(80, 3)):
        for k in (4, 16, 64):
            for seed in range(5):
                ts = ds.TokenSet.uniform(list(range(g.n)), k, seed=seed)
                a = ds.k_disseminate(HybridNetwork(g, seed=seed), ts)
                b = ds.disseminate_via_aggregate(HybridNetwork(g, seed=seed), ts)
                total += 1
                same += a.outputs == b.outputs and a.complete(ts.all_items())
    gaps = generated = 0
    for g in (gc.path(64), gc.path(200), gc.grid(2, 8), gc.grid(2, 16), gc.cycle(80), gc.cycle(256)):
        for k in (8, 16, 32, 64):
            for pe in (1, 2):
                hi = gc.hard_instance(g, k, pe)
                if hi.degenerate:
                    continue
                generated += 1
                t = gc.oracle_distances(hi.graph, [hi.node])
                near = max(t.d(hi.node, u) for u in hi.v1)
                far = min(t.d(hi.node, u) for u in hi.v2)
                gaps += far >= g.n ** pe * near and len(hi.v1) >= g.n / 4 and len(hi.v2) >= g.n / 4
    ok = same == total and gaps == generated and generated > 0
    _verdict(9, ok, f"via-aggregate equal on {same}/{total}; hard instances with verified gap {gaps}/{generated}")
    assert same == total
    assert generated > 0 and gaps == generated
