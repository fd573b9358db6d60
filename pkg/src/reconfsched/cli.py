"""Command line front end: generate scenarios, run managers, sweep caps.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 infeasible input
(a scenario file that parses but fails validation). Set RECONFIG_SCHED_LOG
to debug/info/warning to control verbosity. Every report file carries the
seed and a hash of the effective experiment settings in its header.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .runtime import MANAGER_KINDS, ROW_COLUMNS, RuntimeOptions, TraceResult, run_trace
from .workload import Scenario, generate_scenario, load_scenario, save_scenario, space_hash

log = logging.getLogger("reconfsched")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_BAD_INPUT = 4

DEFAULT_SWEEP_CAPS = "0.9,0.8,0.7,0.6,0.5"
DEFAULT_SWEEP_MANAGERS = "cuttlesys,core_gating,asym_5050,no_gating"
SWEEP_COLUMNS = ("manager,cap,total_instructions,normalized_instructions,"
                 "qos_met_fraction,mean_power,over_budget_ms")


def _setup_logging() -> None:
    name = os.environ.get("RECONFIG_SCHED_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _parse_caps(parser: argparse.ArgumentParser, text: str) -> list[float]:
    if not text:
        return []
    try:
        caps = [float(c) for c in text.split(",") if c.strip()]
    except ValueError:
        parser.error(f"invalid --caps value: {text!r}")
    if any(c <= 0 for c in caps):
        parser.error("caps must be positive fractions of peak power")
    return caps


def _parse_managers(parser: argparse.ArgumentParser, text: str) -> list[str]:
    managers = [m.strip() for m in text.split(",") if m.strip()]
    if not managers:
        parser.error("at least one manager is required")
    for m in managers:
        if m not in MANAGER_KINDS:
            parser.error(f"unknown manager {m!r}; choose from {', '.join(MANAGER_KINDS)}")
    return managers


def _load_checked_scenario(args) -> Scenario | int:
    """Load and validate a scenario file; an int return is an exit code."""
    try:
        scenario = load_scenario(args.scenario)
    except OSError as exc:
        log.error("cannot read scenario: %s", exc)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        log.error("malformed scenario file: %s", exc)
        return EXIT_BAD_INPUT
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    try:
        scenario.validate()
    except ValueError as exc:
        log.error("infeasible scenario: %s", exc)
        return EXIT_BAD_INPUT
    return scenario


def _write_lines(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _csv_cell(value) -> str:
    return "" if value == "" else str(value)


def _render_figures(args) -> bool:
    return not getattr(args, "no_figures", False)


# ---------------------------------------------------------------------------
# generate


def cmd_generate(parser: argparse.ArgumentParser, args) -> int:
    if args.apps < 2 or args.apps % 2:
        parser.error("--apps must be an even count of at least 2")
    scenario = generate_scenario(args.seed, n_apps=args.apps, hetero=args.hetero)
    out = Path(args.out)
    try:
        path = save_scenario(scenario, out)
    except OSError as exc:
        log.error("cannot write %s: %s", out, exc)
        return EXIT_IO
    print(f"generated {len(scenario.apps)} apps "
          f"(space {space_hash(scenario.space)}) -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _run_grid(scenario: Scenario, managers: list[str], caps: list[float | None],
              duration_ms: float, opts: RuntimeOptions
              ) -> dict[tuple[str, float | None], TraceResult]:
    traces = {}
    for mgr in managers:
        for cap in caps:
            log.info("running %s cap=%s for %.0f ms", mgr, cap, duration_ms)
            traces[(mgr, cap)] = run_trace(scenario, mgr, duration_ms=duration_ms,
                                           cap=cap, opts=opts)
    return traces


def _baseline_total(scenario: Scenario, duration_ms: float,
                    opts: RuntimeOptions) -> float:
    ref = run_trace(scenario, "no_gating", duration_ms=duration_ms, cap=1.0,
                    opts=opts)
    return ref.total_instructions


def _interleaved_rows(traces: dict) -> list[dict]:
    keys = list(traces)
    n_quanta = len(next(iter(traces.values())).rows)
    rows = []
    for q in range(n_quanta):
        for key in keys:
            rows.append(traces[key].rows[q])
    return rows


def cmd_run(parser: argparse.ArgumentParser, args) -> int:
    scenario = _load_checked_scenario(args)
    if isinstance(scenario, int):
        return scenario
    managers = _parse_managers(parser, args.managers)
    caps = _parse_caps(parser, args.caps) or [None]
    opts = RuntimeOptions(quantum_ms=args.quantum_ms, workers=args.workers)
    stamp = _config_hash({
        "cmd": "run", "seed": scenario.seed, "space": space_hash(scenario.space),
        "managers": managers, "caps": caps, "duration_ms": args.duration_ms,
        "quantum_ms": args.quantum_ms, "workers": args.workers,
    })
    try:
        traces = _run_grid(scenario, managers, caps, args.duration_ms, opts)
        baseline = _baseline_total(scenario, args.duration_ms, opts)
    except ValueError as exc:
        parser.error(str(exc))

    out = Path(args.out)
    header = f"# seed={scenario.seed} config={stamp}"
    rows = _interleaved_rows(traces)
    cols = ROW_COLUMNS.split(",")
    lines = [header, ROW_COLUMNS]
    lines += [",".join(_csv_cell(r[c]) for c in cols) for r in rows]
    summary = {
        "seed": scenario.seed,
        "config": stamp,
        "duration_ms": args.duration_ms,
        "baseline": "no_gating at cap 1.0",
        "managers": {},
    }
    for (mgr, cap), tr in traces.items():
        infeasible = sum(1 for rep in tr.reports
                         if any("infeasible" in w for w in rep.warnings))
        warn_total = sum(len(rep.warnings) for rep in tr.reports)
        entry = {
            "total_instructions": round(tr.total_instructions, 9),
            "normalized_instructions": round(tr.total_instructions / baseline, 9),
            "qos_met_fraction": tr.qos_met_fraction,
            "mean_power": round(tr.mean_power, 9),
            "infeasible_quanta": infeasible,
            "warnings": warn_total,
        }
        cap_key = "schedule" if cap is None else repr(cap)
        summary["managers"].setdefault(mgr, {})[cap_key] = entry
        if infeasible:
            log.warning("%s cap=%s: %d infeasible quanta", mgr, cap, infeasible)
    try:
        _write_lines(out / "trace.csv", lines)
        doc = json.dumps(summary, indent=2, sort_keys=True)
        (out / "summary.json").write_text(doc + "\n")
        if _render_figures(args):
            from . import plots
            plots.save_timeline_figure(
                rows, out / "trace.png", n_cores=scenario.n_cores,
                qos_ms=scenario.qos_target_ms or None,
                note=f"seed={scenario.seed} config={stamp}")
    except OSError as exc:
        log.error("cannot write report: %s", exc)
        return EXIT_IO
    for mgr, per_cap in summary["managers"].items():
        for cap_key, entry in per_cap.items():
            print(f"{mgr} cap={cap_key}: {entry['normalized_instructions']:.4f} "
                  f"of no_gating, qos_met={entry['qos_met_fraction']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(parser: argparse.ArgumentParser, args) -> int:
    scenario = _load_checked_scenario(args)
    if isinstance(scenario, int):
        return scenario
    managers = _parse_managers(parser, args.managers)
    caps = _parse_caps(parser, args.caps)
    if not caps:
        parser.error("sweep requires --caps")
    opts = RuntimeOptions(quantum_ms=args.quantum_ms, workers=args.workers)
    stamp = _config_hash({
        "cmd": "sweep", "seed": scenario.seed, "space": space_hash(scenario.space),
        "managers": managers, "caps": caps, "duration_ms": args.duration_ms,
        "quantum_ms": args.quantum_ms, "workers": args.workers,
    })
    try:
        traces = _run_grid(scenario, managers, caps, args.duration_ms, opts)
        baseline = _baseline_total(scenario, args.duration_ms, opts)
    except ValueError as exc:
        parser.error(str(exc))

    rows = []
    for (mgr, cap), tr in traces.items():
        over = sum(rep.power_over_budget_us for rep in tr.reports) / 1000.0
        rows.append({
            "manager": mgr,
            "cap": cap,
            "total_instructions": round(tr.total_instructions, 9),
            "normalized_instructions": round(tr.total_instructions / baseline, 9),
            "qos_met_fraction": tr.qos_met_fraction,
            "mean_power": round(tr.mean_power, 9),
            "over_budget_ms": over,
        })
    out = Path(args.out)
    header = f"# seed={scenario.seed} config={stamp}"
    cols = SWEEP_COLUMNS.split(",")
    lines = [header, SWEEP_COLUMNS]
    lines += [",".join(_csv_cell(r[c]) for c in cols) for r in rows]
    try:
        _write_lines(out / "sweep.csv", lines)
        if _render_figures(args):
            from . import plots
            plots.save_sweep_figure(rows, out / "sweep.png",
                                    note=f"seed={scenario.seed} config={stamp}")
    except OSError as exc:
        log.error("cannot write report: %s", exc)
        return EXIT_IO
    for r in rows:
        print(f"{r['manager']} cap={r['cap']}: "
              f"{r['normalized_instructions']:.4f} of no_gating")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--scenario", required=True, help="scenario.json path")
    sub.add_argument("--managers", default="cuttlesys",
                     help="comma list of managers")
    sub.add_argument("--duration-ms", type=float, default=1000.0,
                     help="trace length in ms (multiple of the quantum)")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--workers", type=int, default=4,
                     help="search/reconstruction worker count")
    sub.add_argument("--quantum-ms", type=float, default=100.0,
                     help="decision quantum in ms")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering, emit CSV/JSON only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reconfsched",
        description="Reconfigurable-core scheduling testbed")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write a synthetic scenario")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--apps", type=int, default=32,
                     help="even app count (one per core)")
    gen.add_argument("--hetero", action="store_true",
                     help="fixed big/small machine instead of reconfigurable")
    gen.add_argument("--out", default=".", help="output directory")

    run = subs.add_parser("run", help="trace managers over a scenario")
    _add_common(run)
    run.add_argument("--caps", default="",
                     help="comma list of power caps; empty uses the scenario schedule")

    sweep = subs.add_parser("sweep", help="compare managers across power caps")
    _add_common(sweep)
    sweep.set_defaults(managers=DEFAULT_SWEEP_MANAGERS)
    sweep.add_argument("--caps", default=DEFAULT_SWEEP_CAPS,
                       help="comma list of power caps")
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate":
        return cmd_generate(parser, args)
    if args.command == "run":
        return cmd_run(parser, args)
    return cmd_sweep(parser, args)


if __name__ == "__main__":
    sys.exit(main())
