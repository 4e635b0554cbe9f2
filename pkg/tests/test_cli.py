import json
import subprocess
import sys

import pytest

from rydberg_jumps.cli import (
    EXIT_CONFIG,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_RESOURCE,
    config_hash,
    main,
    parse_config_text,
    read_table,
    resolve_config,
)
from rydberg_jumps.errors import ConfigError


def run(*args):
    return main([str(a) for a in args])


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_parse_config_text():
    raw = parse_config_text("# comment\nparams.v_nn = 0.1  # trailing\n\nrun.seed=3\n")
    assert raw == {"params.v_nn": "0.1", "run.seed": "3"}
    with pytest.raises(ConfigError):
        parse_config_text("params.v = 1")
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")


def test_layer_precedence():
    cfg = resolve_config([{"preset": "fig2b", "params.v_nn": "0.2"}, {"params.v_nn": "0.3"}])
    assert cfg["params.delta_r"] == 0.1
    assert cfg["params.v_nn"] == 0.3
    with pytest.raises(ConfigError):
        resolve_config([{"run.seed": "abc"}])
    with pytest.raises(ConfigError):
        resolve_config([{"lattice.n_atoms": "2", "run.initial": "ggg"}])


def test_hash_ignores_worker_count_and_output():
    a = resolve_config([{"run.n_jobs": "1", "output.dir": "x"}])
    b = resolve_config([{"run.n_jobs": "4", "output.dir": "y"}])
    c = resolve_config([{"run.seed": "1"}])
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_simulate_outputs(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--preset", "fig2b", "--set", "lattice.n_atoms=2", "--duration", 200,
               "--n-traj", 2, "--seed", 4, "--out", out) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {
        "traj_0000_populations.tsv", "traj_0000_emissions.tsv",
        "traj_0001_populations.tsv", "traj_0001_emissions.tsv",
    }
    meta, cols, rows = read_table(out / "traj_0001_populations.tsv")
    assert cols == ["t", "R_0", "R_1"]
    assert len(rows) == 201
    assert meta["config_hash"] == manifest["config_hash"]
    assert "output.dir" not in manifest["config"]


def test_rerun_is_byte_identical_including_parallel(tmp_path):
    common = ["simulate", "--preset", "fig2a", "--set", "lattice.n_atoms=2", "--duration", 300,
              "--n-traj", 3, "--seed", 9]
    assert run(*common, "--out", tmp_path / "a") == EXIT_OK
    assert run(*common, "--out", tmp_path / "b") == EXIT_OK
    assert run(*common, "--n-jobs", 2, "--out", tmp_path / "c") == EXIT_OK
    assert files(tmp_path / "a") == files(tmp_path / "b") == files(tmp_path / "c")


def test_exit_codes(tmp_path):
    assert run("simulate", "--set", "params.bogus=1", "--out", tmp_path) == EXIT_CONFIG
    assert run("simulate", "--preset", "nope", "--out", tmp_path) == EXIT_CONFIG
    assert run("simulate", "--config", tmp_path / "missing.cfg", "--out", tmp_path) == EXIT_CONFIG
    assert run("simulate", "--set", "lattice.n_atoms=13", "--out", tmp_path) == EXIT_RESOURCE
    assert run("oracle", "--set", "lattice.n_atoms=6", "--out", tmp_path) == EXIT_RESOURCE
    assert run("analyze", "--input", tmp_path / "nowhere", "--out", tmp_path / "an") == EXIT_INPUT


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("preset = fig2a\nrun.duration = 50\nrun.seed = 1\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == EXIT_OK
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]["run.duration"] == 50.0


def test_analyze(tmp_path):
    sim = tmp_path / "sim"
    assert run("simulate", "--preset", "fig2b", "--set", "lattice.n_atoms=3", "--duration", 3000,
               "--seed", 2, "--set", "run.dt=1", "--out", sim) == EXIT_OK
    an = tmp_path / "an"
    assert run("analyze", "--input", sim, "--out", an, "--set", "analyze.gap_threshold=30") == EXIT_OK
    names = set(json.loads((an / "manifest.json").read_text())["files"])
    assert {"segmentation.tsv", "single_rates.tsv", "pattern_rates.tsv", "joint_occupancy.tsv",
            "gap_rates.tsv"} <= names
    _, cols, rows = read_table(an / "pattern_rates.tsv")
    assert [r[0] for r in rows] == ["DBB->DDB", "DDB->DBB", "DBD->DDD"]
    # a config that did not produce the inputs is rejected
    assert run("analyze", "--input", sim, "--preset", "fig2a", "--set", "lattice.n_atoms=3",
               "--duration", 3000, "--seed", 2, "--set", "run.dt=1", "--out", an) == EXIT_INPUT


def test_analyze_detects_tampering(tmp_path):
    sim = tmp_path / "sim"
    assert run("simulate", "--preset", "fig2a", "--duration", 100, "--out", sim) == EXIT_OK
    path = sim / "traj_0000_populations.tsv"
    path.write_text(path.read_text().replace("\t0.0\n", "\t1.0\n", 1))
    assert run("analyze", "--input", sim, "--out", tmp_path / "an") == EXIT_INPUT


def test_rates_scan(tmp_path):
    assert run("rates", "--preset", "fig2a", "--set", "rates.scan=delta_r", "--set", "rates.start=-0.1",
               "--set", "rates.stop=0.3", "--set", "rates.step=0.01", "--out", tmp_path) == EXIT_OK
    _, cols, rows = read_table(tmp_path / "rates.tsv")
    assert len(rows) == 41
    assert cols[0] == "delta_r"
    at_zero = rows[10]
    assert float(at_zero[0]) == pytest.approx(0.0, abs=1e-12)
    assert float(at_zero[cols.index("gamma_d_to_b")]) == pytest.approx(6.25e-4)
    assert run("rates", "--set", "rates.scan=bogus", "--out", tmp_path) == EXIT_CONFIG


def test_oracle(tmp_path):
    assert run("oracle", "--preset", "fig2a", "--duration", 20, "--set", "oracle.compare_traj=20",
               "--out", tmp_path) == EXIT_OK
    meta, cols, rows = read_table(tmp_path / "oracle_series.tsv")
    assert float(meta["max_trace_drift"]) < 1e-8
    assert cols[:2] == ["t", "R_0"]
    assert len(rows) == 21
    steady_meta, _, steady = read_table(tmp_path / "steady.tsv")
    assert steady_meta["source"] == "unique"
    assert (tmp_path / "compare.tsv").is_file()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "rydberg_jumps", "rates", "--preset", "fig2b", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "rates.tsv").is_file()
