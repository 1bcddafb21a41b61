import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from mzwlln.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, mapping, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(mapping))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_norming_delta_row(tmp_path, capsys):
    cfg = write(tmp_path, {"weights": "delta", "p": 1.5, "n_grid": [8]})
    assert run("norming", "--config", cfg, "--out", tmp_path / "out", "--quiet") == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("n,p,W_n")
    assert out.splitlines()[1].split(",")[2] == "4.0"
    assert "4.0" in (tmp_path / "out" / "results.csv").read_text()


def test_missing_config_exit_code(tmp_path):
    assert run("norming", "--config", tmp_path / "nope.yaml", "--out", tmp_path / "out") == 2
    assert not (tmp_path / "out").exists()


def test_summability_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, {"weights": {"family": "power_law", "d": 0.5}, "p": 1.5, "n_grid": [10]})
    assert run("norming", "--config", cfg, "--out", tmp_path / "out") == 3
    assert "summab" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_bad_key_named_in_message(tmp_path, capsys):
    cfg = write(tmp_path, {"weights": {"family": "geometric", "rho": 2}, "p": 1.5, "n_grid": [10]})
    assert run("norming", "--config", cfg, "--out", tmp_path / "out") == 3
    assert "rho" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write(tmp_path, {"weights": "delta", "p": 1.5, "n_grid": [10], "colour": "red"})
    assert run("norming", "--config", cfg, "--out", tmp_path / "out") == 3
    assert "colour" in capsys.readouterr().err


def test_resource_error_exit_code(tmp_path):
    cfg = write(tmp_path, {"weights": {"family": "power_law", "d": 0.75},
                           "innovations": {"family": "pareto", "alpha": 1.8}, "n": 100})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "out", "--quiet") == 5
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "failed"


def test_asymptotics_output(tmp_path, capsys):
    assert run("asymptotics", "--config", CONFIGS / "asymptotics.yaml", "--out", tmp_path / "a") == 0
    meta = json.loads((tmp_path / "a" / "results.json").read_text())
    assert meta["c_value"] == pytest.approx(6.0379, abs=1e-4)
    assert meta["quadrature_error"] < 1e-10
    assert "c_value" in capsys.readouterr().out


def test_simulate_byte_identical(tmp_path):
    for out in ("a", "b"):
        assert run("simulate", "--config", CONFIGS / "simulate.yaml", "--experiment", "delta",
                   "--out", tmp_path / out, "--quiet") == 0
    for name in ("results.csv", "results.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "results.csv").read_text().splitlines()
    assert lines[0] == "k,X_k" and len(lines) == 6


def test_seed_flag_overrides_config(tmp_path):
    base = ("simulate", "--config", CONFIGS / "simulate.yaml", "--experiment", "delta", "--quiet")
    run(*base, "--out", tmp_path / "a")
    run(*base, "--out", tmp_path / "b", "--seed", "0x2")
    run(*base, "--out", tmp_path / "c", "--seed", "1")
    a, b, c = ((tmp_path / x / "results.csv").read_bytes() for x in "abc")
    assert a != b and a == c
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 2


def test_wlln_threads_do_not_change_output(tmp_path):
    cfg = write(tmp_path, {"weights": {"family": "geometric", "rho": 0.5},
                           "innovations": {"family": "student_t", "nu": 3},
                           "p": 1.5, "n_grid": [10, 100], "replications": 300,
                           "split": {"rule": "proof", "tau": 0.1, "delta": 0.2}})
    for t in ("1", "4"):
        assert run("wlln", "--config", cfg, "--out", tmp_path / t, "--threads", t, "--quiet") == 0
    for name in ("results.csv", "results.json"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "4" / name).read_bytes()


def test_named_experiments(tmp_path, capsys):
    cfg = CONFIGS / "norming.yaml"
    assert run("norming", "--config", cfg, "--out", tmp_path / "x") == 3
    assert "--experiment" in capsys.readouterr().err
    assert run("norming", "--config", cfg, "--experiment", "missing", "--out", tmp_path / "x") == 3
    assert run("norming", "--config", cfg, "--experiment", "telescoping", "--out", tmp_path / "x") == 0
    manifest = json.loads((tmp_path / "x" / "manifest.json").read_text())
    assert manifest["experiment"] == "telescoping"


def test_defaults_are_merged(tmp_path):
    cfg = write(tmp_path, {"defaults": {"p": 1.5, "n_grid": [4]},
                           "experiments": {"a": {"weights": "delta"}, "b": {"weights": "delta", "p": 1.1}}})
    run("norming", "--config", cfg, "--experiment", "b", "--out", tmp_path / "b", "--quiet")
    row = (tmp_path / "b" / "results.csv").read_text().splitlines()[1].split(",")
    assert row[1] == "1.1"


def test_manifest_complete(tmp_path):
    cfg = write(tmp_path, {"weights": "delta", "p": 1.5, "n_grid": [8]})
    run("norming", "--config", cfg, "--out", tmp_path / "m", "--quiet")
    manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["subcommand"] == "norming"
    assert "version" in manifest
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".m.")]


def test_existing_out_dir_is_reused(tmp_path):
    cfg = write(tmp_path, {"weights": "delta", "p": 1.5, "n_grid": [8]})
    (tmp_path / "m").mkdir()
    assert run("norming", "--config", cfg, "--out", tmp_path / "m", "--quiet") == 0
    assert (tmp_path / "m" / "results.csv").exists()


def test_quiet_keeps_stdout_to_tables(tmp_path, capsys):
    cfg = write(tmp_path, {"weights": "delta", "innovations": {"family": "pareto", "alpha": 1.8},
                           "p": 1.5, "n_grid": [10, 100], "replications": 100, "N_max": 100, "delta": 1.0})
    assert run("rate", "--config", cfg, "--out", tmp_path / "r", "--quiet") == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "n,T_n"
    assert all("," in line for line in out)
    assert run("rate", "--config", cfg, "--out", tmp_path / "r2") == 0
    captured = capsys.readouterr()
    assert "decaying:" in captured.out
    assert "wall time" in captured.err


def test_tails_subcommand(tmp_path):
    cfg = write(tmp_path, {"weights": "delta", "innovations": {"family": "gaussian"}, "p": 1.5,
                           "R": 2000, "x_grid": [0.5, 1, 2, 4]})
    assert run("tails", "--config", cfg, "--out", tmp_path / "t", "--quiet") == 0
    header = (tmp_path / "t" / "results.csv").read_text().splitlines()[0]
    assert header == "x,eps_weighted_tail,eps_se,x0_weighted_tail,x0_se,eps_analytic"


def test_counterexample_subcommand_rejects_regime(tmp_path, capsys):
    cfg = write(tmp_path, {"weights": {"family": "power_law", "d": 0.95}, "innovations": {"family": "gaussian"},
                           "p": 1.2, "norming": "NPowInvP", "n_grid": [10, 100], "replications": 100})
    assert run("counterexample", "--config", cfg, "--out", tmp_path / "c") == 3
    assert "regime" in capsys.readouterr().err


def test_bad_threads_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        run("norming", "--config", tmp_path / "x.yaml", "--threads", "0")
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"weights": "delta", "p": 1.5, "n_grid": [8]})
    proc = subprocess.run([sys.executable, "-m", "mzwlln", "norming", "--config", str(cfg),
                           "--out", str(tmp_path / "o"), "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1].startswith("8,1.5,4.0,")
