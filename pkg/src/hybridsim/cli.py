"""Experiment runner and command-line entry point.

A run is described by a JSON spec (optionally overridden by flags) and
produces one CSV row per (seed, instance). Correctness columns always come
from the centralized oracles, never from the algorithm under test.
"""
from __future__ import annotations

import argparse
import ast
import csv
import io
import itertools
import json
import math
import operator
import sys
from dataclasses import dataclass, field

import numpy as np

from . import dissemination as ds
from . import eulertools as et
from . import graphcore as gc
from . import nq as nqm
from . import routing as rt
from . import shortestpaths as sp
from .hybridnet import HybridNetwork, IdMode, ModelConfig

__all__ = [
    "SpecError",
    "FitError",
    "ExperimentSpec",
    "FitReport",
    "ALGORITHMS",
    "CSV_COLUMNS",
    "parse_graph_arg",
    "build_graph",
    "run_experiment",
    "fit_scaling",
    "main",
]

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CORRECTNESS = 0, 1, 2, 3

CSV_COLUMNS = [
    "instance", "graph", "n", "m", "D", "algo", "mode", "seed", "k", "l", "eps", "alpha",
    "nq", "rounds", "messages", "global_messages", "violations", "correct", "max_stretch",
    "status", "error",
]


class SpecError(ValueError):
    """Invalid experiment spec; ``where`` names the offending field or line."""

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}")
        self.where = where


class FitError(ValueError):
    pass


# arithmetic in n and D for parameters such as "k": "n/4"

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Pow: operator.pow,
}
_FUNCS = {"sqrt": math.sqrt, "log2": math.log2, "ceil": math.ceil, "floor": math.floor, "min": min, "max": max}


def _eval_expr(text: str, env: dict):
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id in env:
            return env[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ValueError(f"unsupported expression {text!r}")

    return ev(ast.parse(text, mode="eval"))


def _resolve(value, env):
    if isinstance(value, str):
        return _eval_expr(value, env)
    return value


# graph specs


def parse_graph_arg(text: str) -> dict:
    """``kind:key=value,...`` (e.g. ``grid:d=2,m=8``) or inline JSON."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    kind, _, rest = text.partition(":")
    params = {}
    for part in filter(None, rest.split(",")):
        key, eq, val = part.partition("=")
        if not eq:
            raise SpecError("--graph", f"expected key=value, got {part!r}")
        params[key.strip()] = json.loads(val)
    return {"kind": kind.strip(), "params": params}


def build_graph(gspec: dict, seed: int = 0) -> gc.Graph:
    params = dict(gspec.get("params", {}))
    g = gc.generate(gspec["kind"], params, int(gspec.get("seed", seed)))
    if gspec.get("weights"):
        g = gc.with_random_weights(g, seed, int(gspec["weights"]))
    return g


def _graph_label(gspec: dict) -> str:
    params = gspec.get("params", {})
    inner = ",".join(f"{k}={params[k]}" for k in sorted(params))
    return f"{gspec['kind']}({inner})"


# algorithms: each returns (correct, max_stretch or None, extra dict)


def _tokens_for(net, k, placement, seed):
    return ds.TokenSet.from_spec(net.ids, k, placement, seed)


def _alg_k_disseminate(net, g, p, seed):
    ts = _tokens_for(net, p["k"], p.get("placement", "uniform"), seed)
    res = ds.k_disseminate(net, ts)
    return res.complete(ts.all_items()), None


def _alg_disseminate_via_aggregate(net, g, p, seed):
    ts = _tokens_for(net, p["k"], p.get("placement", "uniform"), seed)
    res = ds.disseminate_via_aggregate(net, ts)
    return res.complete(ts.all_items()), None


def _alg_flood_disseminate(net, g, p, seed):
    ts = _tokens_for(net, p["k"], p.get("placement", "uniform"), seed)
    res = ds.flood_disseminate(net, ts)
    return res.complete(ts.all_items()), None


def _alg_k_aggregate(net, g, p, seed):
    k = p["k"]
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 1 << gc.log2ceil(g.n), size=(g.n, k))
    res = ds.k_aggregate(net, [list(map(int, row)) for row in vals], min, k)
    want = tuple(int(x) for x in vals.min(axis=0))
    return all(o == want for o in res.outputs), None


def _alg_nq(net, g, p, seed):
    got = nqm.nq_graph(g, p["k"], "distributed", net).value
    return got == nqm.nq_profile(g, p["k"]).value, None


def _alg_cluster_partition(net, g, p, seed):
    cl = nqm.cluster_partition(g, p["k"], "in_model", net)
    hops = gc.hop_matrix(g)
    lo, hi = p["k"] / cl.nq, 2 * p["k"] / cl.nq
    ok = sorted(v for m in cl.members for v in m) == list(range(g.n))
    for mem in cl.members:
        ok = ok and lo <= len(mem) <= hi
        ok = ok and int(hops[np.ix_(mem, mem)].max()) <= 4 * cl.nq * gc.log2ceil(g.n)
    return ok, None


def _alg_kl_route(net, g, p, seed):
    scenario = p.get("scenario", rt.RAND_RAND)
    inst = rt.RoutingInstance.sample(g.n, scenario, p["k"], p.get("l", p["k"]), seed)
    res = rt.kl_route(net, inst, seed=seed)
    return res.exact(inst), None


def _estimate_check(est, g):
    ev = est.evaluate(g)
    return ev["violations"] == 0 and ev["underestimates"] == 0, ev["max_ratio"]


def _alg_sssp(net, g, p, seed):
    src = int(np.random.default_rng(seed).integers(g.n))
    return _estimate_check(sp.sssp(net, src, p.get("eps", 0.5)), g)


def _sources(g, k, seed):
    return sorted(int(v) for v in np.random.default_rng(seed).choice(g.n, size=min(k, g.n), replace=False))


def _alg_k_ssp(net, g, p, seed):
    S = _sources(g, p["k"], seed)
    est = sp.k_ssp(net, S, p.get("eps", 0.5), p.get("source_mode", "random"), seed=seed)
    return _estimate_check(est, g)


def _alg_kl_sp(net, g, p, seed):
    S = _sources(g, p["k"], seed)
    T = _sources(g, p.get("l", p["k"]), seed + 1)
    est = sp.kl_sp(net, S, T, p.get("eps", 0.5), int(p.get("case", 1)), seed=seed)
    return _estimate_check(est, g)


def _alg_apsp_unweighted(net, g, p, seed):
    return _estimate_check(sp.apsp_unweighted(net, p.get("eps", 0.5)), g)


def _alg_apsp_weighted_spanner(net, g, p, seed):
    return _estimate_check(sp.apsp_weighted_spanner(net, p.get("eps", 0.5), seed), g)


def _alg_apsp_weighted_skeleton(net, g, p, seed):
    return _estimate_check(sp.apsp_weighted_skeleton(net, int(p.get("alpha", 1)), seed=seed), g)


def _even_subgraph(g, seed):
    """Symmetric difference of random fundamental cycles: all degrees even."""
    rng = np.random.default_rng(seed)
    parent = [-1] * g.n
    order = [0]
    parent[0] = 0
    for v in order:
        for u in g.adjacency[v]:
            if parent[u] < 0:
                parent[u] = v
                order.append(u)
    tree = {(min(v, parent[v]), max(v, parent[v])) for v in range(1, g.n)}
    extra = [e for e in g.edges() if e not in tree]
    picked: set = set()
    for u, v in extra:
        if rng.random() < 0.5:
            continue
        cyc = {(u, v)}
        a, b = u, v
        pa, pb = [a], [b]
        while a != 0:
            a = parent[a]
            pa.append(a)
        while b != 0:
            b = parent[b]
            pb.append(b)
        while len(pa) > 1 and len(pb) > 1 and pa[-2] == pb[-2]:
            pa.pop()
            pb.pop()
        for path in (pa, pb):
            for x, y in zip(path, path[1:]):
                cyc.add((min(x, y), max(x, y)))
        picked ^= cyc
    return sorted(picked)


def _alg_eulerian_orientation(net, g, p, seed):
    H = _even_subgraph(g, seed)
    o = et.eulerian_orientation(net, H)
    return o.is_eulerian() and len(o.heads) == len(H), None


def _alg_minor_round(net, g, p, seed):
    rng = np.random.default_rng(seed)
    flags = {e for e in g.edges() if rng.random() < 0.5}
    x = [int(v) for v in rng.integers(0, 1 << gc.log2ceil(g.n), size=g.n)]
    spec = et.MinorRoundSpec(flags, x, "min", "max")
    res = et.minor_round(net, spec)
    return (res.supernode, res.y, res.agg) == et.minor_round_reference(g, spec), None


ALGORITHMS = {
    "k_disseminate": (_alg_k_disseminate, False),
    "disseminate_via_aggregate": (_alg_disseminate_via_aggregate, False),
    "flood_disseminate": (_alg_flood_disseminate, False),
    "k_aggregate": (_alg_k_aggregate, False),
    "nq": (_alg_nq, False),
    "cluster_partition": (_alg_cluster_partition, False),
    "kl_route": (_alg_kl_route, False),
    "sssp": (_alg_sssp, True),
    "k_ssp": (_alg_k_ssp, True),
    "kl_sp": (_alg_kl_sp, True),
    "apsp_unweighted": (_alg_apsp_unweighted, False),
    "apsp_weighted_spanner": (_alg_apsp_weighted_spanner, True),
    "apsp_weighted_skeleton": (_alg_apsp_weighted_skeleton, True),
    "eulerian_orientation": (_alg_eulerian_orientation, False),
    "minor_round": (_alg_minor_round, False),
}


# spec


@dataclass
class ExperimentSpec:
    """Graphs × parameter grid × seeds for one algorithm.

    ``params`` values may be lists (swept as a Cartesian product) and
    strings are arithmetic in n and D, e.g. ``"n/4"``.
    """

    graphs: list
    algo: str
    params: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    budget: int | None = None
    mode: str = "hybrid"
    out: str | None = None
    transcript: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.algo not in ALGORITHMS:
            raise SpecError("algo", f"unknown algorithm {self.algo!r}; known: {', '.join(sorted(ALGORITHMS))}")
        if not self.seeds:
            raise SpecError("seeds", "at least one seed is required")
        if not all(isinstance(s, int) for s in self.seeds):
            raise SpecError("seeds", "seeds must be integers")
        if not self.graphs:
            raise SpecError("graph", "at least one graph is required")
        for i, gs in enumerate(self.graphs):
            if not isinstance(gs, dict) or "kind" not in gs:
                raise SpecError(f"graph[{i}]", "needs a 'kind'")
        if self.mode not in ("hybrid", "hybrid0"):
            raise SpecError("mode", "must be hybrid or hybrid0")
        if self.budget is not None and self.budget < 1:
            raise SpecError("budget", "must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise SpecError("spec", "top level must be an object")
        known = {"graph", "graphs", "algo", "params", "seeds", "budget", "mode", "out", "transcript"}
        for key in doc:
            if key not in known:
                raise SpecError(key, "unknown field")
        graphs = doc.get("graphs") or ([doc["graph"]] if "graph" in doc else [])
        seeds = doc.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = list(range(seeds))
        if "algo" not in doc:
            raise SpecError("algo", "missing")
        return cls(
            graphs=list(graphs),
            algo=doc["algo"],
            params=dict(doc.get("params", {})),
            seeds=list(seeds),
            budget=doc.get("budget"),
            mode=doc.get("mode", "hybrid"),
            out=doc.get("out"),
            transcript=doc.get("transcript"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
        return cls.from_dict(doc)

    def instances(self):
        keys = sorted(self.params)
        grids = [v if isinstance(v, list) else [v] for v in (self.params[k] for k in keys)]
        for gs in self.graphs:
            for combo in itertools.product(*grids):
                yield gs, dict(zip(keys, combo))


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _run_row(spec: ExperimentSpec, gspec, raw, seed, index, graph_cache):
    key = (json.dumps(gspec, sort_keys=True), seed)
    g = graph_cache.get(key)
    if g is None:
        g = build_graph(gspec, seed)
        fn, weighted = ALGORITHMS[spec.algo]
        if weighted and not g.weighted:
            g = gc.with_random_weights(g, seed, int(raw.get("max_weight", g.n)))
        if spec.mode == "hybrid0":
            g = gc.with_random_ids(g, seed)
        graph_cache[key] = g
    D = gc.diameter(g)
    env = {"n": g.n, "D": D, "m": g.m}
    p = {k: _resolve(v, env) for k, v in raw.items()}
    for key_ in ("k", "l"):
        if key_ in p:
            p[key_] = max(1, int(round(p[key_])))
    row = {
        "instance": index, "graph": _graph_label(gspec), "n": g.n, "m": g.m, "D": D,
        "algo": spec.algo, "mode": spec.mode, "seed": seed, "k": p.get("k"), "l": p.get("l"),
        "eps": p.get("eps"), "alpha": p.get("alpha"),
        "nq": nqm.nq_profile(g, min(p["k"], g.n)).value if "k" in p else None,
    }
    cap = p.get("cap")
    net = None
    try:
        cfg = ModelConfig.for_graph(g, IdMode(spec.mode), cap=None if cap is None else int(cap))
        net = HybridNetwork(g, cfg, seed)
        correct, stretch = ALGORITHMS[spec.algo][0](net, g, p, seed)
        status = "ok"
        if spec.budget is not None and net.round > spec.budget:
            status, correct = "over_budget", False
        row.update(correct=bool(correct), max_stretch=stretch, status=status, error="")
    except Exception as exc:  # recorded per row; the sweep continues
        row.update(correct=False, max_stretch=None, status="error", error=f"{type(exc).__name__}: {exc}")
    if net is not None:
        s = net.transcript.summary()
        row.update(
            rounds=s["rounds"],
            messages=s["local_messages"] + s["global_messages"],
            global_messages=s["global_messages"],
            violations=s["violations"],
        )
    return row, net


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run every (instance, seed) and write the CSV (and optional JSON
    transcripts) when the spec names output paths. Returns the rows."""
    rows = []
    transcripts = []
    cache: dict = {}
    for index, (gspec, raw) in enumerate(spec.instances()):
        for seed in spec.seeds:
            row, net = _run_row(spec, gspec, raw, seed, index, cache)
            rows.append(row)
            if spec.transcript and net is not None:
                transcripts.append({"instance": index, "seed": seed, "transcript": json.loads(net.transcript.to_json())})
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            fh.write(rows_to_csv(rows))
    if spec.transcript:
        with open(spec.transcript, "w") as fh:
            json.dump(transcripts, fh, sort_keys=True)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


# scaling fits


@dataclass
class FitReport:
    """rounds ≈ constant · predictor^exponent · (log2 n)^log_exponent."""

    predictor: str
    constant: float
    exponent: float
    log_exponent: float
    residual: float
    residuals: list
    points: int

    def to_dict(self) -> dict:
        return {
            "predictor": self.predictor,
            "constant": self.constant,
            "exponent": self.exponent,
            "log_exponent": self.log_exponent,
            "residual": self.residual,
            "points": self.points,
        }


def _read_rows(source):
    if isinstance(source, list):
        return source
    text = source
    if "\n" not in source:
        with open(source) as fh:
            text = fh.read()
    return list(csv.DictReader(io.StringIO(text)))


def fit_scaling(source, predictor: str = "NQ_k", log_exponent: float | None = None) -> FitReport:
    """Least squares in log space of rounds against a predictor and log2 n.

    ``source`` is a CSV path, CSV text, or a list of row dicts with columns
    rounds, n, k and nq. Predictors: NQ_k (column nq), sqrt_k, k. When
    log2 n does not vary (or ``log_exponent`` is given) the log exponent is
    held fixed. Rows with status other than ok are skipped.
    """
    rows = [r for r in _read_rows(source) if r.get("status", "ok") in ("ok", None, "")]
    pts = []
    for r in rows:
        rounds, n = float(r["rounds"]), float(r["n"])
        if predictor == "NQ_k":
            x = float(r["nq"])
        elif predictor == "sqrt_k":
            x = math.sqrt(float(r["k"]))
        elif predictor == "k":
            x = float(r["k"])
        else:
            raise FitError(f"unknown predictor {predictor!r}")
        if rounds > 0 and x > 0 and n > 1:
            pts.append((math.log(rounds), math.log(x), math.log(math.log2(n))))
    if len(pts) < 5:
        raise FitError(f"need at least 5 data points, got {len(pts)}")
    y = np.array([p[0] for p in pts])
    lx = np.array([p[1] for p in pts])
    ll = np.array([p[2] for p in pts])
    if np.ptp(lx) == 0:
        raise FitError("the predictor does not vary across the data")
    fixed = log_exponent is not None or np.ptp(ll) < 1e-12
    if fixed:
        e = 0.0 if log_exponent is None else float(log_exponent)
        A = np.column_stack([np.ones_like(lx), lx])
        coef, *_ = np.linalg.lstsq(A, y - e * ll, rcond=None)
        c, a = coef
        pred = c + a * lx + e * ll
    else:
        A = np.column_stack([np.ones_like(lx), lx, ll])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        c, a, e = coef
        pred = A @ coef
    res = y - pred
    return FitReport(
        predictor,
        float(math.exp(c)),
        float(a),
        float(e),
        float(math.sqrt(np.mean(res ** 2))),
        [float(r) for r in res],
        len(pts),
    )


# command line


def _spec_from_args(args) -> ExperimentSpec:
    doc: dict = {}
    if getattr(args, "spec", None):
        with open(args.spec) as fh:
            text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{args.spec} line {exc.lineno} column {exc.colno}", exc.msg) from None
    if args.graph:
        doc["graphs"] = [parse_graph_arg(s) for s in args.graph]
        doc.pop("graph", None)
    if args.algo:
        doc["algo"] = args.algo
    params = dict(doc.get("params", {}))
    for name in ("k", "l", "eps", "alpha"):
        val = getattr(args, name)
        if val is not None:
            params[name] = json.loads(val) if val[:1] in "[0123456789.-" else val
    doc["params"] = params
    if args.seeds is not None:
        doc["seeds"] = _parse_seeds(args.seeds)
    if args.budget is not None:
        doc["budget"] = args.budget
    if args.out is not None:
        doc["out"] = args.out
    if args.mode is not None:
        doc["mode"] = args.mode
    return ExperimentSpec.from_dict(doc)


def _parse_seeds(text: str):
    """``5`` means seeds 0..4; ``3-7`` a range; ``1,4,9`` a list."""
    if "," in text:
        return [int(s) for s in text.split(",")]
    if "-" in text[1:]:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return list(range(int(text)))


def _add_common(p):
    p.add_argument("spec", nargs="?", help="JSON experiment spec")
    p.add_argument("--graph", action="append", help="kind:key=value,... (repeatable)")
    p.add_argument("--algo")
    p.add_argument("--k")
    p.add_argument("--l")
    p.add_argument("--eps")
    p.add_argument("--alpha")
    p.add_argument("--seeds", help="count, a-b range or comma list")
    p.add_argument("--budget", type=int)
    p.add_argument("--out")
    p.add_argument("--mode", choices=["hybrid", "hybrid0"])


def _exit_for(rows) -> int:
    if any(r["status"] == "error" for r in rows):
        return EXIT_RUNTIME
    if not all(r["correct"] for r in rows):
        return EXIT_CORRECTNESS
    return EXIT_OK


def _cmd_gen(args):
    g = build_graph(parse_graph_arg(args.graph), args.seed)
    if args.weights:
        g = gc.with_random_weights(g, args.seed, args.weights)
    text = gc.write_graph(g)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_nq(args):
    g = build_graph(parse_graph_arg(args.graph), args.seed)
    out = {"graph": args.graph, "n": g.n, "D": gc.diameter(g)}
    for k in args.k:
        out[f"nq_{k}"] = nqm.nq_profile(g, k).value
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def _cmd_run(args):
    spec = _spec_from_args(args)
    rows = run_experiment(spec)
    if not spec.out:
        sys.stdout.write(rows_to_csv(rows))
    return _exit_for(rows)


def _cmd_bench(args):
    """Run the spec, then fit rounds against both predictors."""
    spec = _spec_from_args(args)
    rows = run_experiment(spec)
    ok = [r for r in rows if r["status"] == "ok"]
    report = {"rows": len(rows), "ok": len(ok)}
    for pred in ("NQ_k", "sqrt_k"):
        try:
            report[pred] = fit_scaling(ok, pred).to_dict()
        except FitError as exc:
            report[pred] = {"error": str(exc)}
    print(json.dumps(report, sort_keys=True))
    return _exit_for(rows)


def _cmd_fit(args):
    rep = fit_scaling(args.csv, args.predictor, args.log_exponent)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridsim", description="Hybrid network experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("gen", help="generate a graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", type=int, help="random integer weights up to this value")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_gen)
    p = sub.add_parser("nq", help="neighborhood quality of a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, action="append", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_nq)
    p = sub.add_parser("run", help="run an experiment spec")
    _add_common(p)
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("bench", help="run a spec and fit its scaling")
    _add_common(p)
    p.set_defaults(func=_cmd_bench)
    p = sub.add_parser("fit", help="fit rounds against a predictor")
    p.add_argument("csv")
    p.add_argument("--predictor", choices=["NQ_k", "sqrt_k", "k"], default="NQ_k")
    p.add_argument("--log-exponent", type=float)
    p.set_defaults(func=_cmd_fit)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (SpecError, FitError, gc.ConfigurationError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
