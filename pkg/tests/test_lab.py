import json
import subprocess
import sys

import numpy as np
import pytest

from pnlab.cli import main
from pnlab.lab import (DEFAULTS, SCENARIOS, ScenarioConfig, run_scenario, sweep, thread_cap,
                       validate, verify_manifest)
from pnlab.serial import ConfigError, read_csv


def test_defaults_cover_scenarios():
    assert set(SCENARIOS) <= set(DEFAULTS)
    for name in DEFAULTS:
        validate(name, {})


@pytest.mark.parametrize("params", [{"bogus": 1}, {"s": 1.5}, {"x0": [0.5, -0.5]},
                                    {"delta": "big"}, {"potential": "quadratic"},
                                    {"stress": "random"}])
def test_validation_rejects(params):
    with pytest.raises(ConfigError):
        validate("two_collide", params)


def test_validation_rejects_evolution_and_barrier_fields():
    with pytest.raises(ConfigError):
        validate("evolve", {"kind": "three"})
    with pytest.raises(ConfigError):
        validate("evolve", {"epsilon": 2.0})
    with pytest.raises(ConfigError):
        validate("barrier-check", {"variant": "nope"})
    with pytest.raises(ConfigError):
        validate("sweep", {"base": "sweep"})


def test_two_collide_manifest(tmp_path):
    m = run_scenario(ScenarioConfig("two_collide", {}, tmp_path))
    assert m.ok, m.checks
    assert m.metrics["T_c"] == pytest.approx(1 / (8 * np.pi ** 2), rel=1e-4)
    assert any(f["path"].endswith(".csv") for f in m.files)
    assert verify_manifest(tmp_path) == (True, [])


def test_deleting_a_file_invalidates_manifest(tmp_path):
    m = run_scenario(ScenarioConfig("two_collide", {}, tmp_path))
    (tmp_path / m.files[0]["path"]).unlink()
    ok, problems = verify_manifest(tmp_path)
    assert not ok and problems[0].startswith("missing")


def test_runs_are_deterministic(tmp_path):
    a = run_scenario(ScenarioConfig("three_triple", {}, tmp_path / "a"))
    b = run_scenario(ScenarioConfig("three_triple", {}, tmp_path / "b"))
    for fa, fb in zip(a.files, b.files):
        if fa["path"].endswith(".csv"):
            assert fa["sha256"] == fb["sha256"]
    assert a.metrics["kind"] == "triple"


def test_three_simple_scenario(tmp_path):
    m = run_scenario(ScenarioConfig("three_simple", {}, tmp_path))
    assert m.ok and m.metrics["kind"] == "simple"


def test_module_error_is_captured(tmp_path):
    m = run_scenario(ScenarioConfig("barrier_two", {"x0": [-0.5, 0.0, 0.5]}, tmp_path))
    assert m.status == "error" and m.error["type"] == "ConfigError"
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["status"] == "error" and "traceback" in data["error"]


def test_no_collision_is_reported(tmp_path):
    m = run_scenario(ScenarioConfig("two_collide", {"stress": "constant", "stress_A": 2.0},
                                    tmp_path))
    assert m.metrics["kind"] == "none"


def test_delta_sweep_is_monotone(tmp_path, monkeypatch):
    monkeypatch.setenv("PNLAB_THREADS", "1")
    m = sweep("two_collide", validate("two_collide", {}), "delta",
              [0.1, 0.0125, 0.05, 0.025], tmp_path)
    assert m.ok
    header, rows = read_csv(tmp_path / "sweep.csv")
    assert header[:3] == ["delta", "status", "T_c"]
    deltas = [float(r[0]) for r in rows]
    tc = [float(r[2]) for r in rows]
    assert deltas == sorted(deltas)
    assert all(a < b for a, b in zip(tc, tc[1:]))
    assert tc[0] - 1 / (8 * np.pi ** 2) < 1e-3
    assert verify_manifest(tmp_path)[0]


def test_empty_sweep(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PNLAB_THREADS", "1")
    cfg = tmp_path / "s.cfg"
    cfg.write_text("base = 'two_collide'\nparameter = 'delta'\nvalues = []\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert header == ["delta", "status", "T_c", "min_residual", "rate", "layer_distance"]
    assert rows == []


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("PNLAB_THREADS", "3")
    assert thread_cap() == 3
    monkeypatch.setenv("PNLAB_THREADS", "0")
    with pytest.raises(ConfigError):
        thread_cap()


def test_cli_empty_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing\n")
    assert main(["two_collide", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["type"] == "ConfigError"


def test_cli_sweep_flag(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PNLAB_THREADS", "1")
    assert main(["two_collide", "--sweep", "delta=0.05,0.1", "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "sweep.csv")[1]) == 2
    assert main(["two_collide", "--sweep", "nope=1", "--out", str(tmp_path / "x")]) == 2


def test_console_script_runs(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pnlab.cli", "three_triple", "--out",
                        str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["status"] == "ok"


def test_barrier_check_scenario(tmp_path):
    m = run_scenario(ScenarioConfig("barrier-check", {"variant": "two_upper", "n_times": 3,
                                                      "epsilon": 0.1}, tmp_path))
    # the delta = 0 residual is negative: an honest failed check, not an error
    assert m.status == "failed" and m.metrics["min_residual"] < 0
