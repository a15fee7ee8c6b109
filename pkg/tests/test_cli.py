"""End-to-end checks of the experiment CLI: exit codes, manifests, determinism."""

import hashlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from oja_diffusion import __version__, rate_bound_sin2, stepsize_rule
from oja_diffusion.cli import main

RUN_CFG = {"spec": [2.0, 1.0], "beta": 1e-3, "n_steps": 400, "seed": 7}


def write_cfg(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_console_script_version():
    out = subprocess.run(
        ["oja-diffusion", "--version"], capture_output=True, text=True
    )
    assert out.returncode == 0
    assert __version__ in out.stdout


def test_missing_config_is_exit_2(tmp_path, capsys):
    rc = main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "nope.json" in capsys.readouterr().err


def test_malformed_json_is_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_invalid_spectrum_names_field(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"spec": [1.0, 1.0], "beta": 1e-3, "n_steps": 10})
    rc = main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "spec" in err and "eigengap" in err
    # nothing partial left behind
    assert not (tmp_path / "o").exists()


def test_missing_required_field_is_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"spec": [2.0, 1.0], "n_steps": 10})
    rc = main(["run", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "beta" in capsys.readouterr().err


def test_run_outputs_and_manifest(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "run"
    assert manifest["master_seed"] == 7
    assert manifest["config"] == RUN_CFG
    assert manifest["tool_version"] == __version__
    assert manifest["wall_time_s"] >= 0.0
    for name, digest in manifest["outputs"].items():
        assert sha256(out / name) == digest
    assert set(manifest["outputs"]) == {"trajectory.csv", "summary.json"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_step"] == 400
    assert 0.0 <= summary["final_sin2"] <= 1.0


def test_run_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", cfg, "--out", str(out1)])
    main(["run", "--config", cfg, "--out", str(out2)])
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, RUN_CFG)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", cfg, "--out", str(out1)])
    main(["run", "--config", cfg, "--out", str(out2), "--seed", "8"])
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m2["master_seed"] == 8
    assert (out1 / "trajectory.csv").read_bytes() != (out2 / "trajectory.csv").read_bytes()


def test_out_env_var_and_flag_precedence(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, RUN_CFG)
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("OJA_DIFFUSION_OUT", str(tmp_path / "from_env"))
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "from_env" / "trajectory.csv").exists()
    # an explicit flag beats the environment
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "trajectory.csv").exists()


def test_output_dir_collision_is_runtime_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, RUN_CFG)
    target = tmp_path / "blocked"
    target.write_text("a file, not a directory")
    rc = main(["run", "--config", cfg, "--out", str(target)])
    assert rc == 1


def test_ode_subcommand(tmp_path):
    cfg = write_cfg(tmp_path, {
        "spec": [2.0, 1.0], "v0": "warm:0.75",
        "t_grid": {"start": 0.0, "stop": 3.0, "num": 7}, "delta": 0.25,
    })
    out = tmp_path / "out"
    assert main(["ode", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["crossing_time"] == pytest.approx(math.log(3.0), rel=1e-6)
    curve = (out / "ode_curve.csv").read_text().splitlines()
    assert curve[0] == "t,v1_sq,v2_sq"
    assert len(curve) == 8
    first = [float(x) for x in curve[1].split(",")]
    assert first[1] == pytest.approx(0.25, abs=1e-12)


def test_sde_subcommand(tmp_path):
    cfg = write_cfg(tmp_path, {
        "spec": [2.0, 1.0], "k": 1, "t_end": 1.0, "dt": 1e-3,
        "u0": 0.3, "n_paths": 60,
    })
    out = tmp_path / "out"
    assert main(["sde", "--config", cfg, "--out", str(out)]) == 0
    moments = (out / "ou_moments.csv").read_text().splitlines()
    assert moments[0] == "t,mean_u1,var_u1,closed_mean_u1,closed_var_u1"
    last = [float(x) for x in moments[-1].split(",")]
    assert last[0] == 1.0
    assert last[3] == pytest.approx(0.3 * math.exp(-1.0), rel=1e-12)
    assert last[4] == pytest.approx(-math.expm1(-2.0), rel=1e-12)
    path_rows = (out / "ou_path.csv").read_text().splitlines()
    assert len(path_rows) == 1002


def test_sde_bad_dt_is_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"spec": [2.0, 1.0], "t_end": 1.0, "dt": 0.5})
    assert main(["sde", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "dt" in capsys.readouterr().err


def test_phases_subcommand(tmp_path):
    cfg = write_cfg(tmp_path, {
        "spec": [2.0, 1.0], "beta": 1e-3, "delta": 0.25,
        "betas_for_cutoff": [1e-3, 1e-4, 1e-5],
    })
    out = tmp_path / "out"
    assert main(["phases", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "crossing_report.json").read_text())
    assert report["predicted"]["N3"] == pytest.approx(500 * math.log(250.0), rel=1e-12)
    assert report["empirical"]["N1"] is None  # no trajectory supplied
    assert "N1" in (out / "crossing_report.txt").read_text()
    cutoff = (out / "cutoff.csv").read_text().splitlines()
    assert cutoff[0] == "beta,r21,r31"
    r21s = [float(r.split(",")[1]) for r in cutoff[1:]]
    assert r21s == sorted(r21s, reverse=True)


def test_phases_with_trajectory(tmp_path):
    run_cfg = write_cfg(tmp_path, {
        "spec": [2.0, 1.0], "beta": 1e-2, "n_steps": 1500, "seed": 3,
        "init": "near_saddle:2:1e-4", "sampler": "gaussian", "record_stride": 1,
    }, name="run.json")
    out_run = tmp_path / "run_out"
    assert main(["run", "--config", run_cfg, "--out", str(out_run)]) == 0
    ph_cfg = write_cfg(tmp_path, {
        "spec": [2.0, 1.0], "beta": 1e-2, "delta": 0.25, "n_steps": 1500,
        "init": "near_saddle:2:1e-4", "sampler": "gaussian", "record_stride": 1,
        "seed": 3, "trajectory_csv": str(out_run / "trajectory.csv"),
    }, name="ph.json")
    out = tmp_path / "ph_out"
    assert main(["phases", "--config", ph_cfg, "--out", str(out)]) == 0
    report = json.loads((out / "crossing_report.json").read_text())
    assert report["empirical"]["N1"] is not None
    assert report["config"]["k"] == 2


def test_mc_subcommand(tmp_path):
    cfg = write_cfg(tmp_path, {
        "experiment": "ode_convergence", "spec": [2.0, 1.0], "beta": 1e-3,
        "n_chains": 50, "t_grid": [0.5, 1.0], "init": "warm:0.75",
    })
    out = tmp_path / "out"
    assert main(["mc", "--config", cfg, "--out", str(out), "--workers", "2"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["experiment"] == "ode_convergence"
    assert summary["summary"]["sup_abs_diff"] < 0.1
    table = (out / "ode_convergence_table.csv").read_text().splitlines()
    assert table[0].startswith("t,step,mean_v1sq")


def test_mc_unknown_experiment_is_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"experiment": "bootstrap", "spec": [2.0, 1.0]})
    assert main(["mc", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "experiment" in capsys.readouterr().err


def test_mc_finite_sample_defaults_to_gaussian(tmp_path):
    cfg = write_cfg(tmp_path, {
        "experiment": "finite_sample", "spec": [2.0, 1.0],
        "t_list": [1000], "n_chains": 40,
    })
    out = tmp_path / "out"
    assert main(["mc", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["sampler"] == "gaussian"
    assert "unbounded" in summary["config"]["sampler_note"]


def test_rates_subcommand_and_gnuplot_stub(tmp_path):
    cfg = write_cfg(tmp_path, {"spec": [2.0, 1.0], "t_samples": 1e5})
    out = tmp_path / "out"
    assert main(["rates", "--config", cfg, "--out", str(out), "--gnuplot-stub"]) == 0
    report = json.loads((out / "rate_report.json").read_text())
    assert report["beta_used"] == stepsize_rule_value()
    assert report["bound_sin2"] == rate_bound_sin2_value()
    assert dict(report["table1_rows"])["oja-diffusion"] == 2e-5
    assert "minimax" in (out / "rate_table.txt").read_text()
    stub = (out / "plot.gp").read_text()
    assert stub.startswith("#") and "set datafile separator" in stub
    manifest = json.loads((out / "manifest.json").read_text())
    assert "plot.gp" in manifest["outputs"]


def stepsize_rule_value():
    from oja_diffusion import make_spectrum

    return stepsize_rule(make_spectrum([2.0, 1.0]), 1e5)


def rate_bound_sin2_value():
    from oja_diffusion import make_spectrum

    return rate_bound_sin2(make_spectrum([2.0, 1.0]), 1e5)


def test_workers_do_not_change_mc_output(tmp_path):
    cfg = write_cfg(tmp_path, {
        "experiment": "ode_convergence", "spec": [2.0, 1.0], "beta": 1e-3,
        "n_chains": 40, "t_grid": [0.5], "init": "warm:0.75",
    })
    out1, out2 = tmp_path / "w1", tmp_path / "w3"
    assert main(["mc", "--config", cfg, "--out", str(out1), "--workers", "1"]) == 0
    assert main(["mc", "--config", cfg, "--out", str(out2), "--workers", "3"]) == 0
    a = json.loads((out1 / "manifest.json").read_text())["outputs"]
    b = json.loads((out2 / "manifest.json").read_text())["outputs"]
    assert a == b
