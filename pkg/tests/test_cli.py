"""Command-line interface: exit codes, file outputs, overrides, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from cedas_sim import cli, metrics, verify


def write_config(tmp_path, name="c.json", **mods):
    d = {
        "algorithm": "cedas",
        "problem": {"kind": "quadratic", "n": 4, "p": 6,
                    "samples_per_agent": 12, "heterogeneity": 0.5,
                    "rho": 0.1, "seed": 5},
        "topology": {"kind": "ring", "n": 4},
        "compressor": {"kind": "scaled_rand_k", "k": 2},
        "alpha": 0.1, "gamma": 0.05,
        "schedule": {"kind": "constant", "eta": 0.02},
        "iters": 25, "batch": 1, "seed": 3, "reps": 1,
        "name": "smoke",
    }
    d.update(mods)
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return path


# --- exit codes on bad input ---

def test_missing_config_file(tmp_path, capsys):
    code = cli.main(["run", "--config", str(tmp_path / "nope.json")])
    assert code == cli.EXIT_CONFIG
    assert "nope.json" in capsys.readouterr().err


def test_unparseable_config_file(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_CONFIG
    assert "JSON" in capsys.readouterr().err


def test_unknown_algorithm_in_config(tmp_path, capsys):
    path = write_config(tmp_path, algorithm="adam")
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_CONFIG
    assert "adam" in capsys.readouterr().err


def test_divergent_run_exits_3(tmp_path, capsys):
    path = write_config(tmp_path, algorithm="dsgd", iters=300,
                        schedule={"kind": "constant", "eta": 60.0})
    for key in ("compressor", "alpha", "gamma"):
        d = json.loads(path.read_text())
        d.pop(key)
        path.write_text(json.dumps(d))
    with np.errstate(over="ignore", invalid="ignore"):
        code = cli.main(["run", "--config", str(path),
                         "--out", str(tmp_path / "out")])
    assert code == cli.EXIT_DIVERGED
    assert "iteration" in capsys.readouterr().err


# --- run outputs ---

def test_run_writes_a_readable_trace(tmp_path, capsys):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(path), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "final residual" in printed and "bits per agent" in printed
    trace = metrics.read_trace(out / "smoke.csv")
    assert len(trace) == 26
    assert trace.meta["algorithm"] == "cedas"


def test_run_honors_the_output_env_var(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "envout"))
    path = write_config(tmp_path)
    assert cli.main(["run", "--config", str(path)]) == 0
    assert (tmp_path / "envout" / "smoke.csv").exists()


def test_run_plot_writes_an_svg(tmp_path, capsys):
    path = write_config(tmp_path, iters=10)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(path), "--out", str(out),
                     "--plot"]) == 0
    svg = (out / "smoke.svg").read_text()
    assert "<svg" in svg[:400]


def test_run_is_reproducible_and_thread_invariant(tmp_path):
    path = write_config(tmp_path, reps=4, iters=15)
    outs = [tmp_path / f"o{i}" for i in range(3)]
    assert cli.main(["run", "--config", str(path), "--out", str(outs[0])]) == 0
    assert cli.main(["run", "--config", str(path), "--out", str(outs[1])]) == 0
    assert cli.main(["run", "--config", str(path), "--out", str(outs[2]),
                     "--threads", "4"]) == 0
    blobs = [(o / "smoke.csv").read_bytes() for o in outs]
    assert blobs[0] == blobs[1] == blobs[2]


def test_seed_flag_changes_the_rollout(tmp_path):
    path = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(path), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(path), "--out", str(b),
                     "--seed", "99"]) == 0
    ta = metrics.read_trace(a / "smoke.csv")
    tb = metrics.read_trace(b / "smoke.csv")
    assert not np.array_equal(ta.data["residual"], tb.data["residual"])
    assert tb.meta["seed"] == 99


def test_override_flag_sets_dotted_fields(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(path), "--out", str(out),
                     "--override", "iters=7",
                     "--override", "schedule.eta=0.01"]) == 0
    trace = metrics.read_trace(out / "smoke.csv")
    assert len(trace) == 8
    assert trace.data["eta"][-1] == 0.01


def test_malformed_override_is_a_usage_error(tmp_path, capsys):
    path = write_config(tmp_path)
    assert cli.main(["run", "--config", str(path), "--out",
                     str(tmp_path / "o"), "--override", "iters"]) == cli.EXIT_CONFIG


def test_transient_reference_report(tmp_path, capsys):
    cen = write_config(tmp_path, name="cen.json", algorithm="centralized_sgd",
                       iters=400)
    d = json.loads(cen.read_text())
    for key in ("compressor", "alpha", "gamma", "topology"):
        d.pop(key)
    d["name"] = "cen"
    cen.write_text(json.dumps(d))
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cen), "--out", str(out)]) == 0
    dec = write_config(tmp_path, name="dec.json", iters=400)
    assert cli.main(["run", "--config", str(dec), "--out", str(out),
                     "--transient-ref", str(out / "cen.csv")]) == 0
    assert "transient time" in capsys.readouterr().out


# --- verify ---

def test_verify_quick_passes(capsys):
    assert cli.main(["verify", "quick"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_verify_failure_exits_4(capsys, monkeypatch):
    fake = [verify.CheckResult(name="spectral_gaps", passed=False,
                               detail="forced", seconds=0.0)]
    monkeypatch.setattr(cli.verify, "run_all", lambda level: fake)
    assert cli.main(["verify", "quick"]) == cli.EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out


# --- inspect ---

def test_inspect_prints_spectral_facts(capsys):
    assert cli.main(["inspect", "--kind", "grid", "--n", "25"]) == 0
    out = capsys.readouterr().out
    gap_line = next(line for line in out.splitlines() if "spectral gap" in line)
    assert abs(float(gap_line.split(":")[1]) - 0.054) < 1e-3


def test_inspect_rejects_bad_shapes(capsys):
    assert cli.main(["inspect", "--kind", "grid", "--n", "15"]) == cli.EXIT_CONFIG


# --- figures ---

def test_figures_rejects_oversized_scale(capsys):
    assert cli.main(["figures", "fig2", "--scale", "400"]) == cli.EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_figures_rejects_a_non_square_scale(capsys):
    assert cli.main(["figures", "fig2", "--scale", "8"]) == cli.EXIT_CONFIG


def test_figures_smoke_writes_traces_and_plots(tmp_path, capsys):
    out = tmp_path / "figs"
    assert cli.main(["figures", "fig2", "--scale", "4", "--iters", "30",
                     "--reps", "1", "--out", str(out)]) == 0
    csvs = sorted(p.name for p in out.glob("*.csv"))
    assert len(csvs) == 10 and all(name.startswith("fig2_") for name in csvs)
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert svgs == ["fig2_exponential.svg", "fig2_grid.svg"]
    for name in csvs:
        trace = metrics.read_trace(out / name)
        assert len(trace) == 31


# --- packaging ---

def test_console_script_is_wired_up():
    proc = subprocess.run([sys.executable, "-m", "cedas_sim.cli", "inspect",
                           "--kind", "ring", "--n", "6"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ring" in proc.stdout
