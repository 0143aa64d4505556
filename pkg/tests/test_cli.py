import json

import numpy as np
import pytest

from dana.cli import main, table1_stats, trial_seed
from dana.graph import load_laplacian


def run(args, capsys):
    code = main(args)
    return code, capsys.readouterr()


def test_design_command(tmp_path, capsys):
    code, out = run(["design", "--n", "10", "--m", "30", "--cost", "tight", "--seed", "1",
                     "--out", str(tmp_path)], capsys)
    assert code == 0
    data = json.loads((tmp_path / "design.json").read_text())
    assert data["epsilon"] < 1
    load_laplacian(tmp_path / "laplacian.json").check()


def test_design_global_bounds(capsys):
    code, out = run(["design", "--n", "8", "--m", "14", "--global-bounds"], capsys)
    assert code == 0
    assert "epsilon_global" in json.loads(out.out)


def test_missing_m_is_usage_error(capsys):
    code, out = run(["design", "--n", "10"], capsys)
    assert code == 2 and "--m" in out.err


def test_bad_flag_is_usage_error(capsys):
    assert run(["design", "--bogus"], capsys)[0] == 2
    assert run([], capsys)[0] == 2


def test_table1_trials_one(capsys):
    assert run(["table1", "--rows", "6:8:tight", "--trials", "1"], capsys)[0] == 2


def test_table1_deterministic(tmp_path, capsys):
    args = ["table1", "--rows", "5:6:tight", "--trials", "2", "--seed", "3"]
    code, a = run(args + ["--out", str(tmp_path / "a")], capsys)
    _, b = run(args + ["--out", str(tmp_path / "b")], capsys)
    assert code == 0
    assert (tmp_path / "a" / "table1.csv").read_bytes() == (tmp_path / "b" / "table1.csv").read_bytes()
    assert a.out.splitlines()[0].startswith("n,m,cost,trials,eps_mean")


def test_table1_pool_order_matches_serial():
    rows = [(5, 6, "tight")]
    serial = table1_stats(rows, 3, seed=1)
    pooled = table1_stats(rows, 3, seed=1, workers=2)
    assert serial == pooled
    assert trial_seed(1, 0, 0) != trial_seed(1, 0, 1)


def test_config_merging(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"rows": ["5:6:tight"], "trials": 50}))
    code, out = run(["table1", "--config", str(cfg), "--trials", "2"], capsys)
    assert code == 0
    assert out.out.splitlines()[1].split(",")[3] == "2"
    cfg.write_text(json.dumps({"rows": ["5:6:tight"], "nonsense": 1}))
    assert run(["table1", "--config", str(cfg)], capsys)[0] == 2


def test_oracle_command(tmp_path, capsys):
    code, out = run(["oracle", "--instance", "three-node", "--out", str(tmp_path)], capsys)
    data = json.loads((tmp_path / "oracle.json").read_text())
    assert code == 0
    np.testing.assert_allclose(data["x_star"], [1.0, 3.5, 1.5])
    assert data["active_set"] == ["upper", "free", "lower"]


def test_run_dgd_equals_dana_d(tmp_path, capsys):
    common = ["--n", "8", "--m", "14", "--seed", "2", "--alpha", "theorem1"]
    assert run(["run", "--algo", "dgd", "--out", str(tmp_path / "g")] + common, capsys)[0] == 0
    assert run(["run", "--algo", "dana-d", "--q", "0", "--out", str(tmp_path / "d")] + common,
               capsys)[0] == 0
    assert (tmp_path / "g" / "trace.csv").read_text() == (tmp_path / "d" / "trace.csv").read_text()


def test_run_deterministic_and_agents(tmp_path, capsys):
    common = ["--n", "8", "--m", "14", "--seed", "4", "--q", "1"]
    for name in ("a", "b"):
        assert run(["run", "--out", str(tmp_path / name)] + common, capsys)[0] == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    code, out = run(["run", "--algo", "dana-d-agents"] + common, capsys)
    assert code == 0 and json.loads(out.out)["breaches"] == 0


def test_run_dimension_mismatch(tmp_path, capsys):
    run(["design", "--n", "6", "--m", "8", "--out", str(tmp_path / "six")], capsys)
    run(["design", "--n", "5", "--m", "6", "--out", str(tmp_path / "five")], capsys)
    code, out = run(["run", "--instance", str(tmp_path / "six" / "instance.json"),
                     "--laplacian", str(tmp_path / "five" / "laplacian.json")], capsys)
    assert code == 2 and "n=5" in out.err


def test_run_divergence_exit_code(capsys):
    code, out = run(["run", "--n", "8", "--m", "14", "--alpha", "50"], capsys)
    assert code == 1 and "StepSizeTooLarge" in out.err


def test_run_three_node_dana_c(tmp_path, capsys):
    code, out = run(["run", "--algo", "dana-c", "--instance", "three-node", "--q", "3",
                     "--T", "50", "--record-every", "1000", "--out", str(tmp_path)], capsys)
    summary = json.loads(out.out)
    assert code == 0
    assert max(summary["kkt"].values()) <= 1e-5
    assert (tmp_path / "trace.csv").read_text().startswith("t,primal_err")


def test_run_robust(tmp_path, capsys):
    code, out = run(["run", "--algo", "dana-c-robust", "--instance", "three-node", "--T", "5",
                     "--perturb", "2:0.1", "--record-every", "500"], capsys)
    assert code == 0 and json.loads(out.out)["injections"] == [2.0]
