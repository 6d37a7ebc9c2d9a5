import csv
import io
import json

import pytest

from wfspectral.cli import main, parse_times, read_manifest
from wfspectral.solution import GlobalSolution, SolveConfig, solve


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    return list(csv.DictReader(io.StringIO("".join(l + "\n" for l in text.splitlines() if not l.startswith("#")))))


def test_eigen(capsys):
    assert run(capsys, "eigen", "--k", "1", "--m", "1")[1] == "x - 1/2, lambda = 3\n"
    assert run(capsys, "eigen", "--k", "1", "--m", "0")[1] == "1, lambda = 1\n"
    assert run(capsys, "eigen", "--k", "2", "--m", "0")[1] == "1, lambda = 3\n"
    code, out, _ = run(capsys, "eigen", "--k", "2", "--m", "1")
    assert code == 0 and len(out.splitlines()) == 2
    assert run(capsys, "eigen", "--k", "2", "--m", "2", "--alpha", "1,0")[0] == 2
    assert run(capsys, "eigen", "--k", "2", "--m", "1", "--alpha", "1,0")[0] == 0


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "eigen", "--k", "x")[0] == 2
    assert run(capsys, "solve", "--p", "1,0", "--degree", "2")[0] == 2
    assert run(capsys, "moments", "--p", "1/2,1/2")[0] == 2


def test_solve_round_trip(capsys, tmp_path):
    out = tmp_path / "s.json"
    code, stdout, _ = run(capsys, "solve", "--p", "1/2,1/2", "--degree", "0", "--out", str(out))
    assert code == 0
    assert "mass: exact" in stdout and "martingale: exact" in stdout
    data = json.loads(out.read_text())
    assert data["densities"][0]["modes"] == [
        {"rate": "1", "poly": {"arity": 1, "terms": [[[0], "3/2"]]}}
    ]
    sol = GlobalSolution.loads(out.read_text())
    assert sol == solve(SolveConfig.create(["1/2", "1/2"], 0))


def test_config_file_and_flag_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# moments run\np = 1/2,1/2\nmax_degree = 2\ntimes = 0,1\n")
    code, a, _ = run(capsys, "moments", "--config", str(cfg))
    assert code == 0
    code, b, _ = run(capsys, "moments", "--p", "1/2,1/2", "--max-degree", "2", "--times", "0,1")
    assert a == b
    code, c, _ = run(capsys, "moments", "--config", str(cfg), "--times", "2")
    rows = table(c)
    assert {r["t"] for r in rows} == {"2.0"}
    assert read_manifest(c)["params"]["times"] == "2"


def test_moments_values(capsys):
    code, out, _ = run(capsys, "moments", "--p", "1/2,1/2", "--alpha", "2", "--times", "0,1")
    rows = table(out)
    assert [r["alpha"] for r in rows] == ["(2)", "(2)"]
    assert float(rows[1]["value"]) == pytest.approx(0.5 - 0.25 * 2.718281828459045**-1)


def test_evaluate_and_absorb(capsys, tmp_path):
    sol_file = tmp_path / "s.json"
    run(capsys, "solve", "--p", "1/3,1/3,1/3", "--degree", "4", "--out", str(sol_file))
    code, out, _ = run(capsys, "evaluate", "--solution", str(sol_file), "--times", "0,0.5",
                       "--face", "[0,1]", "--point", "1/3")
    assert code == 0
    rows = table(out)
    het = [r for r in rows if r["quantity"] == "heterozygosity"]
    assert float(het[0]["value"]) == pytest.approx(2 / 9)
    assert float(het[0]["truncation_residual"]) == 0.0
    assert any(r["quantity"].startswith("density[0,1]") for r in rows)
    manifest = read_manifest(out)
    assert set(manifest["inputs"]) == {"solution"}
    code, out, _ = run(capsys, "absorb", "--p", "1/2,1/2", "--degree", "20", "--times", "0:1:1/2")
    rows = {(r["quantity"], r["t"]): r for r in table(out)}
    assert float(rows[("mean_k0", "-")]["value"]) == pytest.approx(1.3863, abs=2e-3)
    assert ("cdf_k0", "0.5") in rows


def test_simulate_compare(capsys, tmp_path):
    sol_file = tmp_path / "s.json"
    run(capsys, "solve", "--p", "1/3,1/3,1/3", "--degree", "6", "--out", str(sol_file))
    rep = tmp_path / "rep.csv"
    per = tmp_path / "reps.csv"
    code, _, _ = run(capsys, "simulate", "--popsize", "200", "--p", "1/3,1/3,1/3", "--replicates", "3000",
                     "--seed", "3", "--het-times", "0:0.5:1/4", "--out", str(rep),
                     "--replicates-out", str(per))
    assert code == 0
    assert len(table(per.read_text())) == 3000
    code, out, _ = run(capsys, "compare", "--solution", str(sol_file), "--report", str(rep))
    assert code == 0
    rows = table(out)
    quantities = {r["quantity"] for r in rows}
    assert {"fixation", "hitting_face", "heterozygosity", "het_log_slope", "loss_time_mean"} <= quantities
    # an impossible threshold forces the failure exit status
    assert run(capsys, "compare", "--solution", str(sol_file), "--report", str(rep),
               "--threshold", "0")[0] == 3
    other = tmp_path / "o.json"
    run(capsys, "solve", "--p", "1/2,1/4,1/4", "--degree", "2", "--out", str(other))
    assert run(capsys, "compare", "--solution", str(other), "--report", str(rep))[0] == 2


def test_simulate_is_thread_independent(capsys):
    args = ["simulate", "--counts", "4,5,6", "--replicates", "500", "--seed", "1", "--het-times", "0,0.5"]
    outs = {run(capsys, *args, "--threads", str(t))[1] for t in (1, 2, 4)}
    assert len(outs) == 1


def test_parse_times():
    assert parse_times("0:1:1/4") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_times("0.1,2") == [0.1, 2.0]
