from __future__ import annotations

import csv
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from geomflux.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

HEADERS = {
    "phase_spin": "sample,arc_length,R_1,R_2,R_3,energy,omega_1,omega_2,omega_3,status",
    "tensor_random": "point,i,j,g_derivative,g_force_states,v_derivative,v_force_states,status",
    "correlation_random": "point,t,component,Q_heisenberg,Q_spectral,C_AB,C_BA,residual,status",
    "theorem_spin": "point,component,lhs,rhs,residual,deltaB,lambda,quadrature_lhs,quadrature_error,status",
    "susceptibility_crossing": "point,component,limit_difference,integral_Q,theorem_rhs,residual,status",
    "classical_harmonic_torus": "component,lhs,lhs_stderr,rhs,rhs_stderr,numerical_error,residual,tolerance,status",
    "classical_quartic_correlation": "t,component,Q,stderr,status",
}


def _task(name):
    return json.loads((CONFIGS / f"{name}.json").read_text())["task"]


def _run(name, out, *extra):
    return main([_task(name), "--config", str(CONFIGS / f"{name}.json"), "--out-dir", str(out), *extra])


@pytest.mark.parametrize("name", sorted(HEADERS))
def test_shipped_config_passes_with_fixed_header(name, tmp_path):
    assert _run(name, tmp_path) == 0
    task = _task(name)
    assert (tmp_path / f"{task}.csv").read_text().splitlines()[0] == HEADERS[name]
    doc = json.loads((tmp_path / f"{task}.json").read_text())
    assert doc["passed"] is True and doc["errors"] == []
    assert "wall_time" not in doc


@pytest.mark.parametrize("name", ["phase_spin", "tensor_random", "correlation_random"])
def test_threads_do_not_change_output(name, tmp_path):
    assert _run(name, tmp_path / "a", "--threads", "1") == 0
    assert _run(name, tmp_path / "b", "--threads", "3") == 0
    task = _task(name)
    for ext in ("csv", "json"):
        assert (tmp_path / "a" / f"{task}.{ext}").read_bytes() == (tmp_path / "b" / f"{task}.{ext}").read_bytes()


def test_theorem_summary_on_spin(tmp_path):
    assert _run("theorem_spin", tmp_path) == 0
    doc = json.loads((tmp_path / "theorem.json").read_text())
    residual = next(c for c in doc["checks"] if c["name"] == "residual")
    assert residual["value"] <= 1e-8 and residual["passed"]


def test_degenerate_path_writes_partial_csv(tmp_path, capsys):
    assert _run("phase_degenerate", tmp_path) == 1
    rows = list(csv.DictReader((tmp_path / "phase.csv").open()))
    assert len(rows) == 65
    assert rows[32]["status"] == "DegenerateSpectrum" and rows[32]["energy"] == ""
    bad = [r for r in rows if r["status"] != "ok"]
    assert all(r["status"] in ("DegenerateSpectrum", "ReferenceOverlapVanishing") for r in bad)
    assert all(r["omega_1"] == "" for r in bad)
    assert any(r["status"] == "ok" and r["energy"] != "" for r in rows)
    doc = json.loads((tmp_path / "phase.json").read_text())
    assert doc["passed"] is False and doc["errors"][0]["code"] == "DegenerateSpectrum"
    assert "DegenerateSpectrum" in capsys.readouterr().err


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GEOMFLUX_OUT_DIR", str(tmp_path / "env"))
    assert main(["tensor", "--config", str(CONFIGS / "tensor_random.json")]) == 0
    assert (tmp_path / "env" / "tensor.csv").exists()


def test_seed_override_recorded(tmp_path):
    assert _run("tensor_random", tmp_path / "a") == 0
    assert _run("tensor_random", tmp_path / "b", "--seed", "9") == 0
    a = json.loads((tmp_path / "a" / "tensor.json").read_text())
    b = json.loads((tmp_path / "b" / "tensor.json").read_text())
    assert b["config"]["seed"] == 9 and a["config_hash"] != b["config_hash"]


def test_timing_is_opt_in(tmp_path):
    assert _run("tensor_random", tmp_path, "--timing") == 0
    assert "wall_time" in json.loads((tmp_path / "tensor.json").read_text())


def test_usage_errors(tmp_path, capsys):
    assert main(["theorem", "--out-dir", str(tmp_path)]) == 2
    assert main(["phase", "--config", str(CONFIGS / "theorem_spin.json"), "--out-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"task": "tensor", "family": {"kind": "builtin-spin", "hbarr": 1}, "points": [[0, 0, 1]]}))
    assert main(["tensor", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert "did you mean 'hbar'?" in capsys.readouterr().err
    assert main(["tensor", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["tensor", "--config", str(bad), "--threads", "0"]) == 2
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_verify_all_subset(tmp_path):
    assert main(["verify-all", "--criteria", "3,6", "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "verify-all.csv").open()))
    assert {r["criterion"] for r in rows} == {"3", "6"}
    assert all(r["passed"] == "true" for r in rows)


@pytest.mark.skipif(shutil.which("geomflux") is None, reason="console script not installed")
def test_console_script(tmp_path):
    env = dict(os.environ, GEOMFLUX_OUT_DIR=str(tmp_path))
    out = subprocess.run(["geomflux", "tensor", "--config", str(CONFIGS / "tensor_random.json")],
                         env=env, capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "[PASS]" in out.stdout
