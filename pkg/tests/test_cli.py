"""Command-line entry points: artifacts, determinism, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from scoutgame.cli import load_config, main
from scoutgame.errors import ConfigError

FAIL_SOLVER = {"solver": {"residual_tol": 0.0, "pg_iters": 0, "max_iters": 1, "restarts": 1}}


def _write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_load_config_defaults_and_merge(tmp_path):
    assert load_config(None)["sweep"]["resolution"] == 20
    path = _write_config(tmp_path, {"solver": {"seed": 11}, "game": {"theta": 2.0}})
    cfg = load_config(path)
    assert cfg["solver"]["seed"] == 11
    assert cfg["game"]["theta"] == 2.0
    assert cfg["solver"]["restarts"] == 8  # untouched default


def test_load_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write_config(tmp_path, {"solver": {"tol": 1e-3}}))
    with pytest.raises(ConfigError):
        load_config(_write_config(tmp_path, {"mystery": {}}))
    with pytest.raises(ConfigError):
        load_config(_write_config(tmp_path, [1, 2]))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))


def test_stage2_writes_report_and_is_byte_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        code = main(["stage2", "--r", "0.4,0.35,0.25", "--out", str(out)])
        assert code == 0
    blob1 = (out1 / "stage2.json").read_bytes()
    blob2 = (out2 / "stage2.json").read_bytes()
    assert blob1 == blob2
    report = json.loads(blob1)
    assert report["r"] == [0.4, 0.35, 0.25]
    assert report["nash_verify"]["max"] <= 1e-5
    assert all(v < 1e-10 for v in report["stationarity"].values())
    assert set(report["x1"]) == {"0", "1", "2", "3"}


def test_stage2_theta_changes_the_game(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["stage2", "--out", str(out1)]) == 0
    assert main(["stage2", "--theta", "4", "--out", str(out2)]) == 0
    k1 = json.loads((out1 / "stage2.json").read_text())["stage1_cost"]
    k2 = json.loads((out2 / "stage2.json").read_text())["stage1_cost"]
    assert k1 != k2


def test_sweep_csv_and_svg(tmp_path):
    out = tmp_path / "out"
    code = main(["sweep", "--resolution", "3", "--svg", "--out", str(out)])
    assert code == 0
    lines = (out / "grid.csv").read_text().splitlines()
    assert len(lines) == 1 + 10  # header + C(3+2, 2) lattice points
    header = lines[0].split(",")
    for col in ("r1", "K", "K_normalized", "residual", "error"):
        assert col in header
    svg = (out / "heatmap.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<circle") == 10

    rerun = tmp_path / "rerun"
    assert main(["sweep", "--resolution", "3", "--svg", "--out", str(rerun)]) == 0
    assert (out / "grid.csv").read_bytes() == (rerun / "grid.csv").read_bytes()
    assert (out / "heatmap.svg").read_bytes() == (rerun / "heatmap.svg").read_bytes()


def test_sweep_failures_exit_nonzero(tmp_path):
    out = tmp_path / "out"
    cfg = _write_config(tmp_path, FAIL_SOLVER)
    code = main(["sweep", "--resolution", "1", "--config", cfg, "--out", str(out)])
    assert code == 2
    body = (out / "grid.csv").read_text()
    assert "NoConvergence" in body


def test_stage2_solver_failure_exit_code(tmp_path):
    cfg = _write_config(tmp_path, FAIL_SOLVER)
    code = main(["stage2", "--config", cfg, "--out", str(tmp_path / "x")])
    assert code == 2


def test_config_error_exit_code(tmp_path):
    cfg = _write_config(tmp_path, {"solver": {"bogus": 1}})
    code = main(["stage2", "--config", cfg, "--out", str(tmp_path / "x")])
    assert code == 3


def test_malformed_allocation_exit_code(tmp_path, capsys):
    out = str(tmp_path / "x")
    assert main(["stage2", "--r", "0.5,0.6,0.2", "--out", out]) == 3
    assert main(["stage2", "--r", "1.2,-0.1,-0.1", "--out", out]) == 3
    assert main(["solve", "--r0", "0.5,0.5", "--out", out]) == 3
    assert "allocation" in capsys.readouterr().err
    # decimal text that is off by float rounding still parses
    assert main(["stage2", "--r", "0.1,0.2,0.7", "--out", out]) == 0


def test_policy_map_file(tmp_path):
    out = tmp_path / "out"
    code = main([
        "policy-map", "--player", "2", "--sigma", "2", "--world", "2",
        "--resolution", "2", "--out", str(out),
    ])
    assert code == 0
    lines = (out / "policy_p2_s2_w2.csv").read_text().splitlines()
    assert lines[0] == "r1,r2,r3,x1,x2,x3"
    assert len(lines) == 1 + 6
    # signal 2 certifies world 2 (1-based): the attacker always hits tower 2
    for line in lines[1:]:
        vals = [float(v) for v in line.split(",")]
        np.testing.assert_allclose(vals[3:], [0.0, 1.0, 0.0], atol=1e-6)


def test_gradcheck_report(tmp_path):
    out = tmp_path / "out"
    code = main(["gradcheck", "--r", "0.3,0.4,0.3", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "gradcheck.json").read_text())
    assert report["max_rel_error"] < 1e-3
    assert len(report["dK_dr"]) == 3


def test_solve_writes_trace_and_solution(tmp_path):
    out = tmp_path / "out"
    cfg = _write_config(tmp_path, {"stage1": {"max_iters": 40}})
    code = main(["solve", "--r0", "0.2,0.2,0.6", "--config", cfg, "--out", str(out)])
    assert code == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["termination"] in ("step", "gradient", "max_iters")
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0].startswith("iteration,r1,r2,r3,K")
    assert 2 <= len(lines) <= 42


def test_perturb_outputs(tmp_path):
    out = tmp_path / "out"
    code = main([
        "perturb", "--thetas", "0,4", "--resolution", "2", "--out", str(out),
    ])
    assert code == 0
    summary = json.loads((out / "perturb.json").read_text())
    assert summary["thetas"] == [0.0, 4.0]
    assert summary["nondecreasing"] is True
    assert summary["pi_policy_max_drift"] <= 1e-3
    assert (out / "perturb_defender_theta_0.csv").exists()
    assert (out / "perturb_defender_theta_4.csv").exists()


def test_module_entry_point(tmp_path):
    # one end-to-end subprocess run through python -m
    proc = subprocess.run(
        [sys.executable, "-m", "scoutgame.cli", "gradcheck", "--r", "0.25,0.5,0.25",
         "--out", str(tmp_path)],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    assert "max relative error" in proc.stdout


def test_policy_map_structural_error_is_config_error(tmp_path):
    code = main([
        "policy-map", "--player", "2", "--sigma", "2", "--world", "1",
        "--resolution", "1", "--out", str(tmp_path),
    ])
    assert code == 2
