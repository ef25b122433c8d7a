import json
import math

import pytest

from hybridsim import cli


def test_unknown_algorithm():
    with pytest.raises(cli.SpecError):
        cli.ExperimentSpec.from_dict({"graph": {"kind": "path", "params": {"n": 8}}, "algo": "nope"})


def test_empty_seeds():
    with pytest.raises(cli.SpecError):
        cli.ExperimentSpec.from_dict({"graph": {"kind": "path", "params": {"n": 8}}, "algo": "nq", "seeds": []})


def test_json_error_has_position():
    with pytest.raises(cli.SpecError) as err:
        cli.ExperimentSpec.from_json('{"algo": "nq",\n oops}')
    assert "line 2" in str(err.value)


def test_deterministic_csv(tmp_path):
    doc = {
        "graphs": [{"kind": "path", "params": {"n": n}} for n in (32, 64)],
        "algo": "k_disseminate",
        "params": {"k": "n/4"},
        "seeds": [0, 1],
    }
    outs = []
    for i in range(2):
        doc["out"] = str(tmp_path / f"r{i}.csv")
        cli.run_experiment(cli.ExperimentSpec.from_dict(doc))
        outs.append((tmp_path / f"r{i}.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = cli._read_rows(str(tmp_path / "r0.csv"))
    assert len(rows) == 4
    assert all(r["correct"] == "1" for r in rows)


def test_failures_recorded_per_row():
    spec = cli.ExperimentSpec.from_dict(
        {"graph": {"kind": "path", "params": {"n": 16}}, "algo": "apsp_unweighted", "params": {"eps": [0.5, 2.0]}}
    )
    rows = cli.run_experiment(spec)
    assert [r["status"] for r in rows] == ["ok", "error"]


def test_path_sweep_rounds_follow_nq():
    spec = cli.ExperimentSpec.from_dict(
        {
            "graphs": [{"kind": "path", "params": {"n": n}} for n in (64, 128, 256, 512, 1024)],
            "algo": "k_disseminate",
            "params": {"k": "n/4"},
        }
    )
    rows = cli.run_experiment(spec)
    nqs = [r["nq"] for r in rows]
    rounds = [r["rounds"] for r in rows]
    assert nqs == sorted(nqs)
    assert rounds == sorted(rounds)
    assert all(r["correct"] for r in rows)


def test_fit_recovers_synthetic():
    rows = []
    for n in (64, 128, 256, 512, 1024, 2048):
        for nq in (2, 3, 5, 8):
            rows.append({"rounds": 7 * nq * math.log2(n) ** 2, "n": n, "nq": nq, "k": nq * nq})
    rep = cli.fit_scaling(rows, "NQ_k")
    assert rep.constant == pytest.approx(7, rel=1e-6)
    assert rep.log_exponent == pytest.approx(2, abs=1e-6)
    assert rep.exponent == pytest.approx(1, abs=1e-6)


def test_fit_needs_points():
    with pytest.raises(cli.FitError):
        cli.fit_scaling([{"rounds": 10, "n": 16, "nq": 2, "k": 4}], "NQ_k")


def test_main_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--graph", "path:n=16", "--algo", "nope"]) == 1
    assert cli.main(["run", "--graph", "path:n=16", "--algo", "apsp_unweighted", "--eps", "3"]) == 2
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--graph", "path:n=16", "--algo", "nq", "--k", "4", "--seeds", "2", "--out", str(out)]) == 0
    assert cli.main(["fit", str(out)]) == 1
    assert cli.main(["nq", "--graph", "path:n=100", "--k", "20"]) == 0
    assert json.loads(capsys.readouterr().out.splitlines()[-1])["nq_20"] == 4


def test_budget_marks_rows():
    spec = cli.ExperimentSpec.from_dict(
        {"graph": {"kind": "path", "params": {"n": 16}}, "algo": "nq", "params": {"k": 4}, "budget": 1}
    )
    rows = cli.run_experiment(spec)
    assert rows[0]["status"] == "over_budget" and not rows[0]["correct"]
    assert cli._exit_for(rows) == 3


def test_gen_writes_graph(tmp_path):
    out = tmp_path / "g.txt"
    assert cli.main(["gen", "--graph", "grid:d=2,m=3", "--out", str(out)]) == 0
    assert out.read_text().split()[0] == "9"


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "hybridsim", "nq", "--graph", "cycle:n=64", "--k", "36"], capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["nq_36"] == 4
