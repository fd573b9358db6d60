"""End-to-end command line tests: exit codes, report files, determinism."""

import filecmp
import json
import subprocess
import sys
from pathlib import Path

import pytest

from reconfsched.cli import EXIT_BAD_INPUT, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from reconfsched.runtime import ROW_COLUMNS


def cli(*argv) -> int:
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def cli_proc(*argv):
    return subprocess.run(
        [sys.executable, "-m", "reconfsched.cli", *map(str, argv)],
        capture_output=True, text=True)


@pytest.fixture(scope="module")
def scen_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("scen")
    assert cli("generate", "--seed", 3, "--apps", 8, "--out", out) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def hetero_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("hscen")
    assert cli("generate", "--seed", 5, "--apps", 8, "--hetero",
               "--out", out) == EXIT_OK
    return out


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


def test_generate_is_deterministic(tmp_path, scen_dir):
    again = tmp_path / "again"
    assert cli("generate", "--seed", 3, "--apps", 8, "--out", again) == EXIT_OK
    assert _tree_bytes(again) == _tree_bytes(scen_dir)


def test_generate_rejects_bad_app_counts(tmp_path):
    assert cli("generate", "--apps", 0, "--out", tmp_path) == EXIT_USAGE
    assert cli("generate", "--apps", 7, "--out", tmp_path) == EXIT_USAGE


def test_run_round_trip_and_fanout(tmp_path, scen_dir):
    out = tmp_path / "r"
    code = cli("run", "--scenario", scen_dir / "scenario.json",
               "--managers", "core_gating,no_gating", "--caps", "0.7",
               "--duration-ms", 200, "--out", out)
    assert code == EXIT_OK
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=3 config=")
    assert lines[1] == ROW_COLUMNS
    body = lines[2:]
    assert len(body) == 2 * 2    # 2 managers x 2 quanta
    assert body[0].split(",")[1] == "core_gating"
    assert body[1].split(",")[1] == "no_gating"
    assert (out / "trace.png").exists()

    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 3 and summary["config"]
    per_cap = summary["managers"]["no_gating"]["0.7"]
    assert set(per_cap) == {"total_instructions", "normalized_instructions",
                            "qos_met_fraction", "mean_power",
                            "infeasible_quanta", "warnings"}


def test_run_normalizes_against_no_gating(tmp_path, scen_dir):
    out = tmp_path / "r"
    assert cli("run", "--scenario", scen_dir / "scenario.json",
               "--managers", "no_gating", "--caps", "1.0",
               "--duration-ms", 100, "--out", out) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["managers"]["no_gating"]["1.0"]["normalized_instructions"] == 1.0


def test_run_without_caps_uses_schedule(tmp_path, scen_dir):
    out = tmp_path / "r"
    assert cli("run", "--scenario", scen_dir / "scenario.json",
               "--managers", "no_gating", "--duration-ms", 100,
               "--out", out, "--no-figures") == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert "schedule" in summary["managers"]["no_gating"]
    assert not (out / "trace.png").exists()


def test_exit_codes(tmp_path, scen_dir):
    scenario = scen_dir / "scenario.json"
    assert cli("run", "--scenario", tmp_path / "nope.json",
               "--out", tmp_path) == EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text('{"broken":')
    assert cli("run", "--scenario", bad, "--out", tmp_path) == EXIT_BAD_INPUT
    assert cli("run", "--scenario", scenario, "--managers", "bogus",
               "--out", tmp_path) == EXIT_USAGE
    assert cli("run", "--scenario", scenario, "--duration-ms", 150,
               "--out", tmp_path) == EXIT_USAGE
    blocker = tmp_path / "file.txt"
    blocker.write_text("x")
    assert cli("run", "--scenario", scenario, "--managers", "no_gating",
               "--duration-ms", 100, "--out", blocker / "sub") == EXIT_IO


def test_structurally_broken_scenario_is_infeasible(tmp_path, scen_dir):
    doc = json.loads((scen_dir / "scenario.json").read_text())
    doc["lc_count"] = doc["n_cores"] + 5
    clone = tmp_path / "scenario.json"
    clone.write_text(json.dumps(doc))
    for name in ("profiles.csv", "training.csv"):
        (tmp_path / name).write_bytes((scen_dir / name).read_bytes())
    assert cli("run", "--scenario", clone, "--out", tmp_path) == EXIT_BAD_INPUT


def test_sweep_grid_and_self_normalization(tmp_path, scen_dir):
    out = tmp_path / "w"
    code = cli("sweep", "--scenario", scen_dir / "scenario.json",
               "--managers", "core_gating,no_gating", "--caps", "1.0,0.7",
               "--duration-ms", 100, "--out", out)
    assert code == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=3 config=")
    body = [l.split(",") for l in lines[2:]]
    assert len(body) == 4    # 2 managers x 2 caps
    ref = next(r for r in body if r[0] == "no_gating" and r[1] == "1.0")
    assert float(ref[3]) == 1.0
    assert (out / "sweep.png").exists()


def test_hetero_round_trip(tmp_path, hetero_dir):
    out = tmp_path / "r"
    assert cli("run", "--scenario", hetero_dir / "scenario.json",
               "--managers", "two_step", "--caps", "0.55",
               "--duration-ms", 100, "--out", out, "--no-figures") == EXIT_OK
    row = (out / "trace.csv").read_text().splitlines()[2].split(",")
    # batch-only machine: the latency-service columns stay empty
    cols = ROW_COLUMNS.split(",")
    assert row[cols.index("lc_config")] == ""
    assert row[cols.index("qos_met")] == ""


def test_cross_process_reports_are_byte_identical(tmp_path, scen_dir):
    args = ("run", "--scenario", scen_dir / "scenario.json",
            "--managers", "core_gating,no_gating", "--caps", "0.7",
            "--duration-ms", 200)
    p1 = cli_proc(*args, "--out", tmp_path / "a")
    p2 = cli_proc(*args, "--out", tmp_path / "b")
    assert p1.returncode == 0 and p2.returncode == 0
    assert p1.stdout == p2.stdout
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["summary.json", "trace.csv", "trace.png"]
    for name in names:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name,
                           shallow=False), name


def test_log_env_var_controls_verbosity(tmp_path, scen_dir):
    import os
    env = dict(os.environ, RECONFIG_SCHED_LOG="info")
    p = subprocess.run(
        [sys.executable, "-m", "reconfsched.cli", "run",
         "--scenario", str(scen_dir / "scenario.json"),
         "--managers", "no_gating", "--duration-ms", "100",
         "--out", str(tmp_path), "--no-figures"],
        capture_output=True, text=True, env=env)
    assert p.returncode == 0
    assert "running no_gating" in p.stderr
