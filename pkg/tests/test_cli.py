import json
import os
import subprocess
import sys

import pytest

from pepagg import cli
from pepagg.experiment import bundled

from conftest import MODEL1

CS = bundled("client_server.pepa")


@pytest.fixture
def model1(tmp_path):
    p = tmp_path / "model1.pepa"
    p.write_text(MODEL1)
    return str(p)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_ok(capsys):
    code, out, _ = run(capsys, "check", CS)
    report = json.loads(out)
    assert code == cli.OK
    assert report["classification"]["shared"] == ["req"]
    assert report["condition"]["satisfied"]


def test_check_condition_failed(capsys, model1):
    code, out, _ = run(capsys, "check", model1)
    assert code == cli.CONDITION_FAILED
    assert json.loads(out)["condition"]["violations"] == [{"group": "Clients", "action": "req", "state": "C_req"}]


def test_threshold_flag(capsys, tmp_path):
    p = tmp_path / "m.pepa"
    p.write_text(MODEL1.replace("small Servers;", "").replace("large Clients;", "")
                 .replace("S_idle[2]", "S_idle[5]").replace("C_think[2]", "C_think[100]"))
    code, out, _ = run(capsys, "check", str(p), "--threshold", "10")
    assert json.loads(out)["partition"] == {"small": ["Servers"], "large": ["Clients"]}
    code, _, err = run(capsys, "check", str(p))
    assert code == cli.MODEL_ERROR and "size class" in err


def test_parse_error_exit(capsys, tmp_path):
    p = tmp_path / "bad.pepa"
    p.write_text("P = (a, 1.0).P;\nsystem = G{P[1]} <a G{P[1]};")
    code, _, err = run(capsys, "parse", str(p))
    assert code == cli.PARSE_ERROR and "2:21" in err


def test_parse_pretty_and_json(capsys):
    code, out, _ = run(capsys, "parse", CS)
    assert code == 0 and "system = Servers{S_idle[5]} <req> Clients{C_think[100]};" in out
    code, out, _ = run(capsys, "parse", CS, "--format", "json")
    assert json.loads(out)["groups"][1] == {"label": "Clients", "component": "C_think", "initial": {"C_think": 100}}


def test_reduce_and_aggregate(capsys):
    code, out, _ = run(capsys, "reduce", CS)
    assert "Clients" not in out and "Servers{S_idle[5]}" in out
    code, out, _ = run(capsys, "aggregate", CS)
    assert len(json.loads(out)["states"]) == 21
    code, out, _ = run(capsys, "aggregate", CS, "--format", "csv")
    assert out.splitlines()[0] == "source,target,action,rate"


def test_state_cap_exit(capsys):
    code, _, err = run(capsys, "solve", CS, "--mode", "exact", "--state-cap", "50")
    assert code == cli.STATE_CAP


def test_reducible_exit(capsys, tmp_path):
    p = tmp_path / "absorbing.pepa"
    p.write_text("A = (go, 1.0).B; B = (stay, 1.0).B; system = G{A[1]}; small G;")
    code, _, err = run(capsys, "solve", str(p), "--mode", "approx")
    assert code == cli.REDUCIBLE and "reducible" in err


def test_verify_reports(capsys):
    code, out, _ = run(capsys, "verify", CS, "--population", "Servers=2", "--population", "Clients=2")
    report = json.loads(out)
    assert code == 0
    assert report["chains"] == 6 and report["boundary"]["states"] == 6
    assert report["regular"] and report["max_diff"] <= 1e-12


def test_verify_irregular_exit(capsys, model1):
    code, out, _ = run(capsys, "verify", model1, "--rate", "r_c=4")
    report = json.loads(out)
    assert code == cli.IRREGULAR
    assert not report["condition_satisfied"] and not report["regular"] and report["max_diff"] is None
    code, out, _ = run(capsys, "verify", model1, "--rate", "r_c=4", "--force-collapse")
    assert code == 0 and json.loads(out)["max_diff"] > 0


def test_solve_marginals(capsys):
    code, out, _ = run(capsys, "solve", CS, "--mode", "both")
    lines = out.splitlines()
    assert lines[0] == "Servers.S_idle,Servers.S_log,Servers.S_broken,exact,approximate"
    assert len(lines) == 22
    total = sum(float(l.split(",")[-1]) for l in lines[1:])
    assert total == pytest.approx(1.0)


def test_solve_transient(capsys):
    code, out, _ = run(capsys, "solve", CS, "--mode", "approx", "--times", "0,1", "--method", "trapezoid")
    rows = out.splitlines()[1:]
    assert len(rows) == 42
    assert rows[0].startswith("0.0,5,0,0,1.0")


def test_compare_sweep(capsys, tmp_path):
    code, out, err = run(capsys, "compare", CS, "--set", "r_t=15,0.1", "--measure", "E2=S_idle + S_log == 2",
                         "--out", str(tmp_path), "--jobs", "1")
    assert code == 0
    rows = (tmp_path / "comparison.csv").read_text().splitlines()
    assert rows[0] == "case,r_t,measure,exact,approximate,error_pct"
    assert len(rows) == 3
    assert (tmp_path / "boundary.gp").exists()
    code, _, err = run(capsys, "compare", CS, "--set", "nope=1", "--measure", "x=S_idle == 1")
    assert code == cli.MODEL_ERROR


def test_compare_needs_measures(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["compare", CS])
    assert exc.value.code == cli.USAGE


def test_analyze_writes_reports(capsys, tmp_path, model1):
    code, _, _ = run(capsys, "analyze", CS, "--out", str(tmp_path / "cs"))
    assert code == 0
    names = sorted(os.listdir(tmp_path / "cs"))
    assert names == ["aggregated.json", "aggregated.mtx", "check.json", "marginal.csv", "reduced.pepa"]
    assert len((tmp_path / "cs" / "marginal.csv").read_text().splitlines()) == 22
    code, _, _ = run(capsys, "analyze", model1, "--out", str(tmp_path / "m1"))
    assert code == cli.CONDITION_FAILED
    assert not json.loads((tmp_path / "m1" / "check.json").read_text())["condition"]["satisfied"]


def test_table1_against_own_values(capsys, tmp_path):
    # a golden file holding this implementation's values must pass
    from pepagg.experiment import cmd_experiment_table1, load_golden
    results, _, _ = cmd_experiment_table1(jobs=1)
    golden = load_golden()
    for case, res in zip(golden["cases"], results):
        case["approximate"] = {r.measure: r.approximate for r in res.rows}
        case["exact"] = {r.measure: r.exact for r in res.rows}
    path = tmp_path / "golden.json"
    path.write_text(json.dumps(golden))
    code, out, _ = run(capsys, "table1", "--golden", str(path), "--jobs", "1", "--out", str(tmp_path / "t"))
    assert code == 0 and "case 3 (r_t=0.1)" in out
    first = (tmp_path / "t" / "comparison.csv").read_bytes()
    run(capsys, "table1", "--golden", str(path), "--jobs", "1", "--out", str(tmp_path / "t"))
    assert (tmp_path / "t" / "comparison.csv").read_bytes() == first


def test_error_pct_self_consistent(tmp_path, capsys):
    run(capsys, "compare", CS, "--set", "r_t=0.2", "--measure", "P311=S_idle == 3 and S_log == 1",
        "--out", str(tmp_path))
    row = (tmp_path / "comparison.csv").read_text().splitlines()[1].split(",")
    exact, approx, err = float(row[3]), float(row[4]), float(row[5])
    assert abs(100 * abs(approx - exact) / exact - err) < 0.1


def test_pepa_log_verbosity(tmp_path):
    env = dict(os.environ, PEPA_LOG="INFO")
    proc = subprocess.run([sys.executable, "-m", "pepagg.cli", "aggregate", CS, "--out", str(tmp_path)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert "aggregated CTMC: 21 states" in proc.stderr
    env["PEPA_LOG"] = "ERROR"
    proc = subprocess.run([sys.executable, "-m", "pepagg.cli", "aggregate", CS, "--out", str(tmp_path)],
                          capture_output=True, text=True, env=env)
    assert proc.stderr == ""
