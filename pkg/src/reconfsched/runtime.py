"""Quantum-by-quantum resource managers with full time/instruction ledgers.

Seven managers share one accounting core: the reconfigurable flow
(profile, reconstruct, search, steady state), two heterogeneous strategies
(map-then-configure and joint search), core gating with or without cache
way partitioning, an asymmetric-design oracle plus its fixed 50/50 variant,
and an uncapped upper bound. Every quantum is a phase ledger in integer
microseconds that sums exactly to the quantum length; instructions accrue
as phase duration times the ground-truth rate of whatever configuration a
core is actually running in that phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .config_space import ConfigSpace, HeteroSpace
from .reconstruct import SgdParams, run_three_reconstructions
from .sampling import MeasureContext, Sample, measure, profile_pair, three_mm3_design
from .search import (
    Budget,
    ConstrainedObjective,
    DdsParams,
    InfeasibleBudget,
    PredictionTables,
    dds_search,
    lc_config_select,
    one_step_validity,
    power_repair,
)
from .surrogate import fit_rbf
from .workload import Scenario, ground_truth, max_in_window

MANAGER_KINDS = (
    "cuttlesys",
    "two_step",
    "one_step",
    "core_gating",
    "core_gating_waypart",
    "asym_oracle",
    "asym_5050",
    "no_gating",
)

# fixed phase overheads, microseconds
PROFILE_US = 2_000
RECONSTRUCT_US = 4_800
SEARCH_US = 1_300
GATING_PROFILE_US = 1_000
TWO_STEP_MAP_US = 2_000
TWO_STEP_SAMPLE_US = 8_000
TWO_STEP_SEARCH_US = 990          # 0.9 ms plus 10% synchronization
ONE_STEP_SAMPLE_US = 18_000
ONE_STEP_SEARCH_US = 2 * TWO_STEP_SEARCH_US


@dataclass(frozen=True)
class Phase:
    kind: str
    duration_us: int


@dataclass
class QuantumPlan:
    phases: list[Phase]
    chosen: dict[str, int]          # app id -> allocation index (active apps)
    core_states: dict[str, str]     # app id -> "active" | "gated"
    lc_cores: int
    warnings: tuple[str, ...] = ()

    @property
    def total_us(self) -> int:
        return sum(p.duration_us for p in self.phases)

    def check(self, quantum_us: int) -> None:
        if self.total_us != quantum_us:
            raise ValueError(
                f"phases sum to {self.total_us} us, quantum is {quantum_us} us")


@dataclass
class QuantumReport:
    instructions: dict[str, float]   # batch app -> G instructions
    total_instructions: float
    geomean_bips: float
    mean_power: float
    peak_power: float
    qos_met: bool | None
    tail_latency_ms: float | None
    power_over_budget_us: int
    search_evaluations: int = 0
    warnings: tuple[str, ...] = ()


@dataclass
class RuntimeOptions:
    quantum_ms: float = 100.0
    workers: int = 4                 # search parallelism for the batch DDS
    sgd: SgdParams = field(default_factory=SgdParams)
    lc_guard: float = 0.05           # prediction headroom on the QoS target
    contention_factor: float = 0.5   # unpartitioned-LLC effective share

    @property
    def quantum_us(self) -> int:
        return round(self.quantum_ms * 1000)


@dataclass
class RuntimeState:
    """Carry-over between quanta for one (manager, scenario) run."""

    lc_cores: int
    lc_initial: int
    quantum: int = 0
    t_ms: float = 0.0
    lc_config: int | None = None
    prev_configs: dict[str, int] = field(default_factory=dict)
    gated: set[str] = field(default_factory=set)
    observations: list[Sample] = field(default_factory=list)
    opts: RuntimeOptions = field(default_factory=RuntimeOptions)

    @classmethod
    def fresh(cls, scenario: Scenario, opts: RuntimeOptions | None = None) -> "RuntimeState":
        return cls(lc_cores=scenario.lc_count, lc_initial=scenario.lc_count,
                   opts=opts or RuntimeOptions())


def accounting(segments: Sequence[tuple[float, float]]) -> float:
    """Instructions in billions from (duration_us, bips) work segments."""
    return sum(dur_us * 1e-6 * bips for dur_us, bips in segments)


def _duty(state: RuntimeState, scenario: Scenario, n_gated: int) -> float:
    """Equal-share multiplexing factor for batch apps after core reclaim."""
    running = len(scenario.batch_apps) - n_gated
    if running <= 0:
        return 0.0
    cores = scenario.n_cores - state.lc_cores - n_gated
    if cores <= 0:
        return 0.0
    return min(1.0, cores / running)


def _effective_load(state: RuntimeState, offered: float) -> float:
    # extra service cores dilute per-core load
    if state.lc_cores <= 0:
        return offered
    return offered * state.lc_initial / state.lc_cores


def _dds_seed(scenario: Scenario, state: RuntimeState, salt: int) -> int:
    return (scenario.seed * 7919 + state.quantum * 104729 + salt) & 0x7FFFFFFF


class _WorkLedger:
    """Per-app work segments plus per-phase system power."""

    def __init__(self):
        self.segments: dict[str, list[tuple[float, float]]] = {}
        self.power_segments: list[tuple[float, float]] = []

    def work(self, app_id: str, duration_us: float, bips: float) -> None:
        self.segments.setdefault(app_id, []).append((duration_us, bips))

    def power(self, duration_us: float, watts: float) -> None:
        self.power_segments.append((duration_us, watts))

    def instructions(self) -> dict[str, float]:
        return {app: accounting(segs) for app, segs in self.segments.items()}

    def power_stats(self, quantum_us: int, budget_w: float) -> tuple[float, float, int]:
        if not self.power_segments:
            return 0.0, 0.0, 0
        total = sum(d * w for d, w in self.power_segments)
        peak = max(w for _, w in self.power_segments)
        over = sum(int(d) for d, w in self.power_segments if w > budget_w + 1e-9)
        return total / quantum_us, peak, over


def _gt_batch_power(scenario: Scenario, chosen: dict[str, int],
                    gated: set[str]) -> dict[str, float]:
    out = {}
    for app in scenario.batch_apps:
        if app.app_id in gated:
            out[app.app_id] = 0.0
        else:
            out[app.app_id] = app.power_at(chosen[app.app_id])
    return out


def _sensor_gate(scenario: Scenario, chosen: dict[str, int], gated: set[str],
                 lc_power: float, budget_w: float) -> tuple[set[str], list[str]]:
    """Measured-power compliance pass before steady state.

    Gates the hungriest still-active batch apps until the ground-truth
    system draw fits the budget. The service is never touched; if it alone
    exceeds the budget, the plan runs with every batch core off plus a
    warning.
    """
    warnings: list[str] = []
    per_app = _gt_batch_power(scenario, chosen, gated)
    total = sum(per_app.values()) + lc_power
    if total <= budget_w + 1e-9:
        return set(gated), warnings
    order = sorted((a for a in per_app if a not in gated),
                   key=lambda a: (-per_app[a], a))
    gated = set(gated)
    for app_id in order:
        if total <= budget_w + 1e-9:
            break
        total -= per_app[app_id]
        gated.add(app_id)
    if total > budget_w + 1e-9:
        warnings.append("infeasible: service alone exceeds the power budget")
    return gated, warnings


def _steady_power(scenario: Scenario, chosen: dict[str, int], gated: set[str],
                  lc_power: float) -> float:
    return sum(_gt_batch_power(scenario, chosen, gated).values()) + lc_power


def _geomean_active(scenario: Scenario, chosen: dict[str, int],
                    gated: set[str]) -> float:
    vals = [float(a.bips[chosen[a.app_id]])
            for a in scenario.batch_apps if a.app_id not in gated]
    if not vals or any(v <= 0 for v in vals):
        return 0.0
    return float(np.exp(np.mean(np.log(vals))))


def _tail_latency(scenario: Scenario, state: RuntimeState, lc_index: int,
                  window_load: float) -> float:
    lc = scenario.lc_apps[0]
    return lc.latency_at(lc_index, _effective_load(state, window_load))


def relocate_cores(state: RuntimeState, scenario: Scenario, *, qos_met: bool,
                   tail_ms: float | None, config_feasible: bool) -> list[str]:
    """One-core-per-quantum reclaim/yield at the quantum boundary.

    Reclaims a batch core when the target was missed and no allocation
    could meet it; yields one back when the target is met with at least
    the configured slack and the service holds more than its initial cores.
    """
    warnings: list[str] = []
    if scenario.lc_count == 0 or tail_ms is None:
        return warnings
    if not qos_met and not config_feasible:
        if scenario.n_cores - state.lc_cores > 0:
            state.lc_cores += 1
        else:
            warnings.append("saturated: no batch core left to reclaim")
    elif (qos_met and state.lc_cores > state.lc_initial
          and tail_ms <= (1.0 - scenario.qos_slack) * scenario.qos_target_ms):
        state.lc_cores -= 1
    return warnings


# ---------------------------------------------------------------------------
# reconfigurable manager


def run_quantum_cuttlesys(state: RuntimeState, scenario: Scenario,
                          budget: Budget) -> tuple[QuantumPlan, QuantumReport]:
    space = scenario.space
    opts = state.opts
    quantum_us = opts.quantum_us
    steady_us = quantum_us - PROFILE_US - RECONSTRUCT_US - SEARCH_US
    if steady_us <= 0:
        raise ValueError("quantum too short for the fixed phase overheads")
    ctx = MeasureContext(seed=scenario.seed, quantum=state.quantum)
    offered = scenario.load_at(state.t_ms)
    eff_load = _effective_load(state, offered)
    warnings: list[str] = []
    ledger = _WorkLedger()
    batch = scenario.batch_apps
    batch_ids = [a.app_id for a in batch]
    lc_ids = [a.app_id for a in scenario.lc_apps]
    duty = _duty(state, scenario, n_gated=0)

    # Phase 1: paired two-point profiling; every core wakes and runs the
    # probe configurations, so the work is real.
    samples = profile_pair(scenario.apps, space, ctx, load=eff_load)
    state.observations.extend(samples)
    prof_power = 0.0
    half_us = PROFILE_US // 2
    for app in batch:
        app_samples = [s for s in samples if s.app_id == app.app_id]
        for s in app_samples:
            ledger.work(app.app_id, half_us * duty, float(app.bips[s.config_index]))
            prof_power += app.power_at(s.config_index) / len(app_samples)
    if lc_ids:
        lc = scenario.lc_apps[0]
        lc_prof = [s for s in samples if s.app_id == lc.app_id]
        prof_power += state.lc_cores * float(
            np.mean([lc.power_at(s.config_index) for s in lc_prof]))
    ledger.power(PROFILE_US, prof_power)

    # Phases 2+3: inference and search; cores keep running the previous
    # quantum's configuration meanwhile.
    pre_power = 0.0
    for app in batch:
        prev = state.prev_configs.get(app.app_id)
        if prev is not None and app.app_id not in state.gated:
            rate = float(app.bips[prev])
            ledger.work(app.app_id, (RECONSTRUCT_US + SEARCH_US) * duty, rate)
            pre_power += app.power_at(prev)
    if lc_ids and state.lc_config is not None:
        pre_power += state.lc_cores * scenario.lc_apps[0].power_at(state.lc_config)
    ledger.power(RECONSTRUCT_US, pre_power)
    ledger.power(SEARCH_US, pre_power)

    recon = run_three_reconstructions(
        state.observations, scenario.training, space, batch_ids, lc_ids,
        load=eff_load, params=opts.sgd, workers=1)

    # service allocation: cheapest prediction under the guarded target
    p = space.n_cache_options
    config_feasible = True
    fixed: dict[int, int] = {}
    power_scale = {a: duty for a in batch_ids}
    if lc_ids:
        lc_id = lc_ids[0]
        lat_pred = recon.latency[lc_id]
        pw_pred = np.repeat(recon.power[lc_id], p)
        guard_qos = (1.0 - opts.lc_guard) * (budget.qos_ms or scenario.qos_target_ms)
        pick = lc_config_select(lat_pred, pw_pred, guard_qos, space)
        if pick is None:
            config_feasible = False
            pick = int(np.argmin(lat_pred))    # best effort, relocation follows
        state.lc_config = pick
        fixed[len(batch_ids)] = pick
        power_scale[lc_id] = float(state.lc_cores)

    tables = PredictionTables.build(
        space, batch_ids + lc_ids, recon.throughput, recon.power,
        power_scale=power_scale)
    objective = ConstrainedObjective(tables, budget, fixed_dims=fixed)
    params = DdsParams(workers=opts.workers,
                       seed=_dds_seed(scenario, state, salt=1))
    outcome = dds_search(params, objective, len(batch_ids) + len(lc_ids),
                         space.size, fixed_dims=fixed)
    n_evals = sum(1 for r in outcome.log if r.iteration >= 1)
    chosen = {a: int(outcome.best[d]) for d, a in enumerate(batch_ids)}
    if lc_ids:
        chosen[lc_ids[0]] = state.lc_config

    # predicted-power repair: demote everyone to the cheapest column first,
    # then deactivate in descending predicted draw
    gated: set[str] = set()
    pred_power = {a: float(recon.power[a][chosen[a] // p]) * duty for a in batch_ids}
    lc_pred = (float(recon.power[lc_ids[0]][state.lc_config // p]) * state.lc_cores
               if lc_ids else 0.0)
    if sum(pred_power.values()) + lc_pred > budget.max_power:
        for a in batch_ids:
            col = int(np.argmin(recon.power[a]))
            chosen[a] = col * p    # cheapest core config at the smallest ways
            pred_power[a] = float(recon.power[a][col]) * duty
        dims = batch_ids + lc_ids
        try:
            _, off = power_repair([chosen[a] for a in dims],
                                  [pred_power.get(a, lc_pred) for a in dims],
                                  budget.max_power,
                                  protected={dims.index(a) for a in lc_ids})
            gated = {dims[d] for d in off}
        except InfeasibleBudget:
            gated = set(batch_ids)
            warnings.append("infeasible: predicted demand exceeds budget with "
                            "all batch cores off")

    # measured-power compliance before committing to steady state
    lc_gt_power = (state.lc_cores * scenario.lc_apps[0].power_at(state.lc_config)
                   if lc_ids else 0.0)
    gated, sensor_warnings = _sensor_gate(scenario, chosen, gated, lc_gt_power,
                                          budget.max_power)
    warnings.extend(sensor_warnings)

    duty_after = _duty(state, scenario, n_gated=len(gated))
    steady_power = _steady_power(scenario, chosen, gated, lc_gt_power)
    for app in batch:
        if app.app_id not in gated:
            ledger.work(app.app_id, steady_us * duty_after,
                        float(app.bips[chosen[app.app_id]]))
    ledger.power(steady_us, steady_power)

    # write back measured steady-state values for the next reconstruction
    steady_ms = steady_us / 1000.0
    for app in batch:
        if app.app_id not in gated:
            state.observations.append(
                measure(app, chosen[app.app_id], steady_ms, ctx,
                        t0_ms=10.0, replicates=8))
    if lc_ids:
        state.observations.append(
            measure(scenario.lc_apps[0], state.lc_config, steady_ms, ctx,
                    load=eff_load, t0_ms=10.0, replicates=8))

    qos_met, tail = None, None
    if lc_ids:
        window_load = max_in_window(scenario.load_schedule, state.t_ms,
                                    state.t_ms + opts.quantum_ms)
        tail = _tail_latency(scenario, state, state.lc_config, window_load)
        qos_met = tail <= scenario.qos_target_ms

    plan = QuantumPlan(
        phases=[Phase("profile", PROFILE_US),
                Phase("reconstruct", RECONSTRUCT_US),
                Phase("search", SEARCH_US),
                Phase("steady", steady_us)],
        chosen=chosen,
        core_states={a: ("gated" if a in gated else "active") for a in batch_ids},
        lc_cores=state.lc_cores,
        warnings=tuple(warnings),
    )
    plan.check(quantum_us)
    mean_p, peak_p, over_us = ledger.power_stats(quantum_us, budget.max_power)
    instr = ledger.instructions()
    report = QuantumReport(
        instructions={a: instr.get(a, 0.0) for a in batch_ids},
        total_instructions=sum(instr.get(a, 0.0) for a in batch_ids),
        geomean_bips=_geomean_active(scenario, chosen, gated),
        mean_power=mean_p, peak_power=peak_p,
        qos_met=qos_met, tail_latency_ms=tail,
        power_over_budget_us=over_us,
        search_evaluations=n_evals,
        warnings=tuple(warnings),
    )

    state.prev_configs = dict(chosen)
    state.gated = gated
    boundary_warnings = relocate_cores(state, scenario, qos_met=bool(qos_met),
                                       tail_ms=tail,
                                       config_feasible=config_feasible)
    report.warnings = tuple(list(report.warnings) + boundary_warnings)
    return plan, report


# ---------------------------------------------------------------------------
# heterogeneous strategies


def greedy_map(big_bips: dict[str, float], small_bips: dict[str, float],
               n_big: int, n_small: int) -> dict[str, str]:
    """Class assignment by descending big/small speedup ratio.

    The top n_big ratio apps take big cores, the rest small; equal ratios
    break toward the lexicographically lower app id.
    """
    apps = sorted(big_bips)
    if sorted(small_bips) != apps:
        raise ValueError("big and small samples must cover the same apps")
    if len(apps) > n_big + n_small:
        raise ValueError("more apps than cores")
    ranked = sorted(apps, key=lambda a: (-big_bips[a] / small_bips[a], a))
    return {a: ("big" if i < n_big else "small") for i, a in enumerate(ranked)}


def _hetero_pair(scenario: Scenario, ctx: MeasureContext) -> dict[str, dict[str, Sample]]:
    """Full-provision paired samples: 1 ms on each class, halves swapped."""
    space = scenario.space
    big_full = space.encode("big", space.big_configs[0])
    small_full = space.encode("small", space.small_configs[0])
    out: dict[str, dict[str, Sample]] = {}
    split = (len(scenario.apps) + 1) // 2
    for i, app in enumerate(scenario.apps):
        order = (big_full, small_full) if i < split else (small_full, big_full)
        first = measure(app, order[0], 1.0, ctx, t0_ms=0.0)
        second = measure(app, order[1], 1.0, ctx, t0_ms=1.0)
        by_index = {s.config_index: s for s in (first, second)}
        out[app.app_id] = {"big": by_index[big_full], "small": by_index[small_full]}
    return out


def _rbf_fill(space: HeteroSpace, design, measured: dict[int, Sample]
              ) -> tuple[np.ndarray, np.ndarray]:
    """Extend 9 design measurements to all big-class indices via RBF."""
    levels = {w: k for k, w in enumerate(space.big_levels)}
    pts = np.array(design.coded, dtype=float)
    bips_v = np.array([measured[space.encode("big", c)].bips for c in design.runs])
    watt_v = np.array([measured[space.encode("big", c)].watts for c in design.runs])
    bips_fit = fit_rbf(pts, bips_v)
    watt_fit = fit_rbf(pts, watt_v)
    bips = np.zeros(space.size)
    watts = np.zeros(space.size)
    for cfg in space.big_configs:
        idx = space.encode("big", cfg)
        if idx in measured:
            bips[idx] = measured[idx].bips
            watts[idx] = measured[idx].watts
        else:
            coded = [levels[w] for w in cfg.as_tuple()]
            bips[idx] = max(1e-6, float(bips_fit.predict(coded)))
            watts[idx] = max(0.0, float(watt_fit.predict(coded)))
    return bips, watts


def _hetero_finish(state: RuntimeState, scenario: Scenario, budget: Budget,
                   ledger: _WorkLedger, chosen: dict[str, int],
                   pred_power: dict[str, float], steady_us: int,
                   warnings: list[str]) -> set[str]:
    """Shared predicted-repair, measured-compliance, steady-state block."""
    ids = list(chosen)
    gated: set[str] = set()
    if sum(pred_power.values()) > budget.max_power:
        try:
            _, off = power_repair([chosen[a] for a in ids],
                                  [pred_power[a] for a in ids],
                                  budget.max_power)
            gated = {ids[d] for d in off}
        except InfeasibleBudget:
            gated = set(ids)
            warnings.append("infeasible: predicted demand exceeds budget with "
                            "all cores off")
    gated, sensor_warnings = _sensor_gate(scenario, chosen, gated, 0.0,
                                          budget.max_power)
    warnings.extend(sensor_warnings)
    for app in scenario.batch_apps:
        if app.app_id not in gated:
            ledger.work(app.app_id, steady_us, float(app.bips[chosen[app.app_id]]))
    ledger.power(steady_us, _steady_power(scenario, chosen, gated, 0.0))
    state.prev_configs = dict(chosen)
    state.gated = gated
    return gated


def _hetero_report(scenario: Scenario, ledger: _WorkLedger, chosen: dict[str, int],
                   gated: set[str], budget: Budget, quantum_us: int,
                   n_evals: int, warnings: list[str]) -> QuantumReport:
    mean_p, peak_p, over_us = ledger.power_stats(quantum_us, budget.max_power)
    instr = ledger.instructions()
    ids = [a.app_id for a in scenario.batch_apps]
    return QuantumReport(
        instructions={a: instr.get(a, 0.0) for a in ids},
        total_instructions=sum(instr.get(a, 0.0) for a in ids),
        geomean_bips=_geomean_active(scenario, chosen, gated),
        mean_power=mean_p, peak_power=peak_p,
        qos_met=None, tail_latency_ms=None,
        power_over_budget_us=over_us,
        search_evaluations=n_evals,
        warnings=tuple(warnings),
    )


def run_quantum_two_step(state: RuntimeState, scenario: Scenario,
                         budget: Budget) -> tuple[QuantumPlan, QuantumReport]:
    """Map apps to core classes first, then configure within each class.

    The 2 ms mapping probe does no useful work. If the full-provision
    mapping fits the budget the quantum goes straight to steady state;
    otherwise a designed sampling pass plus an RBF fill feeds a
    class-bounded search (each worker owns one app dimension).
    """
    space = scenario.space
    if not getattr(space, "hetero", False):
        raise ValueError("two_step requires a heterogeneous scenario")
    opts = state.opts
    quantum_us = opts.quantum_us
    ctx = MeasureContext(seed=scenario.seed, quantum=state.quantum)
    warnings: list[str] = []
    ledger = _WorkLedger()
    apps = scenario.batch_apps
    ids = [a.app_id for a in apps]
    by_id = {a.app_id: a for a in apps}
    n_big = scenario.n_cores // 2
    n_small = scenario.n_cores - n_big

    pair = _hetero_pair(scenario, ctx)
    state.observations.extend(s for d in pair.values() for s in d.values())
    pair_power = sum((by_id[a].power_at(pair[a]["big"].config_index)
                      + by_id[a].power_at(pair[a]["small"].config_index)) / 2
                     for a in ids)
    ledger.power(TWO_STEP_MAP_US, pair_power)

    mapping = greedy_map({a: pair[a]["big"].bips for a in ids},
                         {a: pair[a]["small"].bips for a in ids},
                         n_big, n_small)
    big_full = space.encode("big", space.big_configs[0])
    small_full = space.encode("small", space.small_configs[0])
    full_of = {a: (big_full if mapping[a] == "big" else small_full) for a in ids}
    mapped_power = sum(pair[a][mapping[a]].watts for a in ids)

    if mapped_power <= budget.max_power:
        steady_us = quantum_us - TWO_STEP_MAP_US
        chosen = dict(full_of)
        pred = {a: pair[a][mapping[a]].watts for a in ids}
        gated = _hetero_finish(state, scenario, budget, ledger, chosen, pred,
                               steady_us, warnings)
        plan = QuantumPlan(
            phases=[Phase("profile", TWO_STEP_MAP_US), Phase("steady", steady_us)],
            chosen=chosen,
            core_states={a: ("gated" if a in gated else "active") for a in ids},
            lc_cores=0, warnings=tuple(warnings))
        plan.check(quantum_us)
        return plan, _hetero_report(scenario, ledger, chosen, gated, budget,
                                    quantum_us, 0, warnings)

    # over budget at full provision: designed sampling plus surrogate fill
    design = three_mm3_design(space.big_levels)
    bips_rows = np.full((len(ids), space.size), 1e-6)
    watt_rows = np.zeros((len(ids), space.size))
    sample_power = 0.0
    for d, a in enumerate(ids):
        app = by_id[a]
        if mapping[a] == "big":
            measured = {big_full: pair[a]["big"]}
            slot = 0
            for cfg in design.runs:
                idx = space.encode("big", cfg)
                if idx == big_full:
                    continue
                s = measure(app, idx, 1.0, ctx, t0_ms=2.0 + slot)
                state.observations.append(s)
                measured[idx] = s
                ledger.work(a, 1000, float(app.bips[idx]))
                sample_power += app.power_at(idx) / 8.0
                slot += 1
            bips_rows[d], watt_rows[d] = _rbf_fill(space, design, measured)
        else:
            for slot, cfg in enumerate(space.small_configs):
                idx = space.encode("small", cfg)
                s = measure(app, idx, 1.0, ctx, t0_ms=2.0 + slot)
                state.observations.append(s)
                bips_rows[d, idx] = s.bips
                watt_rows[d, idx] = s.watts
                ledger.work(a, 1000, float(app.bips[idx]))
                sample_power += app.power_at(idx) / 8.0
    ledger.power(TWO_STEP_SAMPLE_US, sample_power)
    ledger.power(TWO_STEP_SEARCH_US, mapped_power)    # cores idle at mapped configs

    tables = PredictionTables(space, ids, np.maximum(bips_rows, 1e-6),
                              watt_rows, np.ones(len(ids)))
    objective = ConstrainedObjective(tables, budget)
    bounds = [(space.big_range[0], space.big_range[-1]) if mapping[a] == "big"
              else (space.small_range[0], space.small_range[-1]) for a in ids]
    params = DdsParams(workers=len(ids), seed=_dds_seed(scenario, state, salt=2))
    outcome = dds_search(params, objective, len(ids), space.size, bounds=bounds)
    n_evals = sum(1 for r in outcome.log if r.iteration >= 1)
    chosen = {a: int(outcome.best[d]) for d, a in enumerate(ids)}
    pred = {a: float(watt_rows[d, chosen[a]]) for d, a in enumerate(ids)}

    steady_us = quantum_us - TWO_STEP_MAP_US - TWO_STEP_SAMPLE_US - TWO_STEP_SEARCH_US
    gated = _hetero_finish(state, scenario, budget, ledger, chosen, pred,
                           steady_us, warnings)
    plan = QuantumPlan(
        phases=[Phase("profile", TWO_STEP_MAP_US),
                Phase("sample", TWO_STEP_SAMPLE_US),
                Phase("search", TWO_STEP_SEARCH_US),
                Phase("steady", steady_us)],
        chosen=chosen,
        core_states={a: ("gated" if a in gated else "active") for a in ids},
        lc_cores=0, warnings=tuple(warnings))
    plan.check(quantum_us)
    return plan, _hetero_report(scenario, ledger, chosen, gated, budget,
                                quantum_us, n_evals, warnings)


def run_quantum_one_step(state: RuntimeState, scenario: Scenario,
                         budget: Budget) -> tuple[QuantumPlan, QuantumReport]:
    """Joint mapping-and-configuration search over both core classes.

    Every app samples the designed big-class runs and the whole small
    class (work accrues while sampling), an RBF fill completes the big
    class, and one class-unrestricted search with per-candidate validity
    rejection picks the assignment. The search phase costs twice the
    two-step search phase.
    """
    space = scenario.space
    if not getattr(space, "hetero", False):
        raise ValueError("one_step requires a heterogeneous scenario")
    opts = state.opts
    quantum_us = opts.quantum_us
    ctx = MeasureContext(seed=scenario.seed, quantum=state.quantum)
    warnings: list[str] = []
    ledger = _WorkLedger()
    apps = scenario.batch_apps
    ids = [a.app_id for a in apps]
    n_big = scenario.n_cores // 2
    n_small = scenario.n_cores - n_big

    design = three_mm3_design(space.big_levels)
    small_full = space.encode("small", space.small_configs[0])
    bips_rows = np.full((len(ids), space.size), 1e-6)
    watt_rows = np.zeros((len(ids), space.size))
    sample_power = 0.0
    for d, app in enumerate(apps):
        a = app.app_id
        measured: dict[int, Sample] = {}
        slot = 0.0
        for cfg in design.runs:            # 9 ms on a big core
            idx = space.encode("big", cfg)
            s = measure(app, idx, 1.0, ctx, t0_ms=slot)
            state.observations.append(s)
            measured[idx] = s
            ledger.work(a, 1000, float(app.bips[idx]))
            sample_power += app.power_at(idx) / 18.0
            slot += 1.0
        bips_rows[d], watt_rows[d] = _rbf_fill(space, design, measured)
        for cfg in space.small_configs:    # 8 ms on a small core
            idx = space.encode("small", cfg)
            s = measure(app, idx, 1.0, ctx, t0_ms=slot)
            state.observations.append(s)
            bips_rows[d, idx] = s.bips
            watt_rows[d, idx] = s.watts
            ledger.work(a, 1000, float(app.bips[idx]))
            sample_power += app.power_at(idx) / 18.0
            slot += 1.0
        # the odd 18th millisecond runs at the full small configuration
        ledger.work(a, 1000, float(app.bips[small_full]))
        sample_power += app.power_at(small_full) / 18.0
    ledger.power(ONE_STEP_SAMPLE_US, sample_power)

    tables = PredictionTables(space, ids, np.maximum(bips_rows, 1e-6),
                              watt_rows, np.ones(len(ids)))
    objective = ConstrainedObjective(
        tables, budget,
        validity=lambda x: one_step_validity(x, space, n_big, n_small))

    def balanced(rng: np.random.Generator) -> list[int]:
        perm = rng.permutation(len(ids))
        x = [0] * len(ids)
        for pos, dim in enumerate(perm):
            if pos < n_big:
                x[dim] = int(rng.integers(space.big_range[0], space.size))
            else:
                x[dim] = int(rng.integers(0, space.n_small))
        return x

    params = DdsParams(workers=len(ids), max_iter=80,
                       seed=_dds_seed(scenario, state, salt=3))
    outcome = dds_search(params, objective, len(ids), space.size,
                         initial_sampler=balanced)
    n_evals = sum(1 for r in outcome.log if r.iteration >= 1)
    if not math.isfinite(outcome.score):
        warnings.append("search found no valid assignment; greedy fallback")
        mapping = greedy_map(
            {a: float(tables.bips[d, space.big_range[0]]) for d, a in enumerate(ids)},
            {a: float(tables.bips[d, 0]) for d, a in enumerate(ids)},
            n_big, n_small)
        chosen = {a: (space.big_range[0] if mapping[a] == "big" else 0)
                  for a in ids}
    else:
        chosen = {a: int(outcome.best[d]) for d, a in enumerate(ids)}
    pred = {a: float(watt_rows[d, chosen[a]]) for d, a in enumerate(ids)}
    sample_mean_power = sample_power
    ledger.power(ONE_STEP_SEARCH_US, sample_mean_power)

    steady_us = quantum_us - ONE_STEP_SAMPLE_US - ONE_STEP_SEARCH_US
    gated = _hetero_finish(state, scenario, budget, ledger, chosen, pred,
                           steady_us, warnings)
    plan = QuantumPlan(
        phases=[Phase("sample", ONE_STEP_SAMPLE_US),
                Phase("search", ONE_STEP_SEARCH_US),
                Phase("steady", steady_us)],
        chosen=chosen,
        core_states={a: ("gated" if a in gated else "active") for a in ids},
        lc_cores=0, warnings=tuple(warnings))
    plan.check(quantum_us)
    return plan, _hetero_report(scenario, ledger, chosen, gated, budget,
                                quantum_us, n_evals, warnings)


# ---------------------------------------------------------------------------
# baselines


def _snap_ways(space: ConfigSpace, value: float) -> int:
    """Cache index of the largest allocation option not above value."""
    best = 0
    for k, opt in enumerate(space.cache_options):
        if opt <= value + 1e-12:
            best = k
    return best


def _gate_by_deficit(power_by_app: dict[str, float], budget_w: float,
                     base_power: float) -> tuple[set[str], float]:
    """Gate in descending draw; the final core is the smallest-slack fit."""
    active = dict(power_by_app)
    gated: set[str] = set()
    total = sum(active.values()) + base_power
    while total > budget_w + 1e-9 and active:
        deficit = total - budget_w
        fits = [a for a, p in active.items() if p >= deficit]
        if fits:
            pick = min(fits, key=lambda a: (active[a], a))
        else:
            pick = min(active, key=lambda a: (-active[a], a))
        total -= active.pop(pick)
        gated.add(pick)
    return gated, total


def run_quantum_core_gating(state: RuntimeState, scenario: Scenario,
                            budget: Budget, way_partitioned: bool = False
                            ) -> tuple[QuantumPlan, QuantumReport]:
    """Fixed widest cores; meet the budget by turning whole cores off.

    Batch cores are gated in descending measured draw, except that the last
    gated core is the one covering the remaining deficit with the least
    slack. Service cores are never gated. The LLC is shared equally among
    active cores: with way partitioning each core keeps its full share,
    without it contention halves the effective share.
    """
    space = scenario.space
    opts = state.opts
    quantum_us = opts.quantum_us
    steady_us = quantum_us - GATING_PROFILE_US
    ctx = MeasureContext(seed=scenario.seed, quantum=state.quantum)
    warnings: list[str] = []
    ledger = _WorkLedger()
    batch = scenario.batch_apps
    ids = [a.app_id for a in batch]
    lc = scenario.lc_apps[0] if scenario.lc_count else None
    offered = scenario.load_at(state.t_ms)

    def share_index(n_active: int) -> int:
        share = space.total_ways / max(1, n_active)
        if not way_partitioned:
            share *= opts.contention_factor
        return space.encode(space.widest, _snap_ways(space, share))

    # wake everything for the measurement millisecond
    n_all = scenario.n_cores
    idx0 = share_index(n_all)
    measured: dict[str, float] = {}
    prof_power = 0.0
    for app in batch:
        s = measure(app, idx0, 1.0, ctx)
        state.observations.append(s)
        measured[app.app_id] = s.watts
        ledger.work(app.app_id, GATING_PROFILE_US, float(app.bips[idx0]))
        prof_power += app.power_at(idx0)
    lc_meas = 0.0
    if lc is not None:
        s = measure(lc, idx0, 1.0, ctx, load=_effective_load(state, offered))
        lc_meas = state.lc_cores * s.watts
        prof_power += state.lc_cores * lc.power_at(idx0)
    ledger.power(GATING_PROFILE_US, prof_power)

    gated, _ = _gate_by_deficit(measured, budget.max_power, lc_meas)
    # verify against the true draw; gate further by the same rule if needed
    lc_gt = state.lc_cores * lc.power_at(idx0) if lc is not None else 0.0
    gt = {a.app_id: a.power_at(idx0) for a in batch if a.app_id not in gated}
    extra, total = _gate_by_deficit(gt, budget.max_power, lc_gt)
    gated |= extra
    if total > budget.max_power + 1e-9:
        warnings.append("infeasible: service alone exceeds the power budget")

    n_active = scenario.n_cores - len(gated)
    idx = share_index(n_active)
    chosen = {a: idx for a in ids}
    lc_power = state.lc_cores * lc.power_at(idx) if lc is not None else 0.0
    if lc is not None:
        chosen[lc.app_id] = idx
    for app in batch:
        if app.app_id not in gated:
            ledger.work(app.app_id, steady_us, float(app.bips[idx]))
    ledger.power(steady_us, _steady_power(scenario, chosen, gated, lc_power))

    qos_met, tail = None, None
    if lc is not None:
        window_load = max_in_window(scenario.load_schedule, state.t_ms,
                                    state.t_ms + opts.quantum_ms)
        tail = _tail_latency(scenario, state, idx, window_load)
        qos_met = tail <= scenario.qos_target_ms
        state.lc_config = idx

    plan = QuantumPlan(
        phases=[Phase("profile", GATING_PROFILE_US), Phase("steady", steady_us)],
        chosen=chosen,
        core_states={a: ("gated" if a in gated else "active") for a in ids},
        lc_cores=state.lc_cores, warnings=tuple(warnings))
    plan.check(quantum_us)
    mean_p, peak_p, over_us = ledger.power_stats(quantum_us, budget.max_power)
    instr = ledger.instructions()
    report = QuantumReport(
        instructions={a: instr.get(a, 0.0) for a in ids},
        total_instructions=sum(instr.get(a, 0.0) for a in ids),
        geomean_bips=_geomean_active(scenario, chosen, gated),
        mean_power=mean_p, peak_power=peak_p,
        qos_met=qos_met, tail_latency_ms=tail,
        power_over_budget_us=over_us,
        warnings=tuple(warnings))
    state.prev_configs = dict(chosen)
    state.gated = gated
    return plan, report


def run_quantum_asym(state: RuntimeState, scenario: Scenario, budget: Budget,
                     fixed_big: int | None = None
                     ) -> tuple[QuantumPlan, QuantumReport]:
    """Asymmetric-design baseline with perfect knowledge and zero overhead.

    Cores come in two fixed types (widest and narrowest). The service is
    pinned to big cores. The oracle variant scans every big/small split and
    keeps the best feasible one; the fixed variant pins the split 50/50.
    Within a split batch apps go to big cores by descending speedup ratio.
    """
    space = scenario.space
    opts = state.opts
    quantum_us = opts.quantum_us
    batch = scenario.batch_apps
    ids = [a.app_id for a in batch]
    lc = scenario.lc_apps[0] if scenario.lc_count else None
    lc_init = scenario.lc_count
    share_idx = _snap_ways(space, space.total_ways / scenario.n_cores)
    big_idx = space.encode(space.widest, share_idx)
    small_idx = space.encode(space.narrowest, share_idx)
    offered = scenario.load_at(state.t_ms)
    window_load = max_in_window(scenario.load_schedule, state.t_ms,
                                state.t_ms + opts.quantum_ms)

    ratios = sorted(ids, key=lambda a: (
        -float(next(x for x in batch if x.app_id == a).bips[big_idx])
        / float(next(x for x in batch if x.app_id == a).bips[small_idx]), a))

    def evaluate(n_big: int):
        slots = n_big - lc_init
        chosen = {a: (big_idx if i < slots else small_idx)
                  for i, a in enumerate(ratios)}
        lc_power = lc_init * lc.power_at(big_idx) if lc is not None else 0.0
        gated, sensor_warnings = _sensor_gate(scenario, chosen, set(), lc_power,
                                              budget.max_power)
        gm = _geomean_active(scenario, chosen, gated)
        tail = (lc.latency_at(big_idx, _effective_load(state, window_load))
                if lc is not None else None)
        met = None if tail is None else tail <= scenario.qos_target_ms
        return chosen, gated, gm, tail, met, sensor_warnings

    if fixed_big is not None:
        splits = [fixed_big]
    else:
        splits = list(range(lc_init, scenario.n_cores + 1))
    evaluated = [(nb, evaluate(nb)) for nb in splits]
    qos_ok = [e for e in evaluated if e[1][4] is not False]
    pool = qos_ok or evaluated
    n_big, (chosen, gated, gm, tail, met, warnings) = max(
        pool, key=lambda e: (e[1][2], -e[0]))
    warnings = list(warnings)
    if not qos_ok:
        warnings.append("no split meets the latency target")

    ledger = _WorkLedger()
    duty = _duty(state, scenario, n_gated=len(gated))
    for app in batch:
        if app.app_id not in gated:
            ledger.work(app.app_id, quantum_us * duty,
                        float(app.bips[chosen[app.app_id]]))
    lc_power = lc_init * lc.power_at(big_idx) if lc is not None else 0.0
    ledger.power(quantum_us, _steady_power(scenario, chosen, gated, lc_power))
    if lc is not None:
        chosen[lc.app_id] = big_idx
        state.lc_config = big_idx

    plan = QuantumPlan(
        phases=[Phase("steady", quantum_us)],
        chosen=chosen,
        core_states={a: ("gated" if a in gated else "active") for a in ids},
        lc_cores=lc_init, warnings=tuple(warnings))
    plan.check(quantum_us)
    mean_p, peak_p, over_us = ledger.power_stats(quantum_us, budget.max_power)
    instr = ledger.instructions()
    report = QuantumReport(
        instructions={a: instr.get(a, 0.0) for a in ids},
        total_instructions=sum(instr.get(a, 0.0) for a in ids),
        geomean_bips=gm, mean_power=mean_p, peak_power=peak_p,
        qos_met=met, tail_latency_ms=tail, power_over_budget_us=over_us,
        warnings=tuple(warnings))
    state.prev_configs = dict(chosen)
    state.gated = gated
    return plan, report


def run_quantum_no_gating(state: RuntimeState, scenario: Scenario,
                          budget: Budget) -> tuple[QuantumPlan, QuantumReport]:
    """Everything on, widest configuration, budget ignored."""
    space = scenario.space
    opts = state.opts
    quantum_us = opts.quantum_us
    batch = scenario.batch_apps
    ids = [a.app_id for a in batch]
    lc = scenario.lc_apps[0] if scenario.lc_count else None
    if getattr(space, "hetero", False):
        idx = space.encode("big", space.big_configs[0])
    else:
        idx = space.encode(space.widest,
                           _snap_ways(space, space.total_ways / scenario.n_cores))
    chosen = {a: idx for a in ids}
    ledger = _WorkLedger()
    duty = _duty(state, scenario, n_gated=0)
    for app in batch:
        ledger.work(app.app_id, quantum_us * duty, float(app.bips[idx]))
    lc_power = state.lc_cores * lc.power_at(idx) if lc is not None else 0.0
    ledger.power(quantum_us, _steady_power(scenario, chosen, set(), lc_power))

    qos_met, tail = None, None
    if lc is not None:
        chosen[lc.app_id] = idx
        state.lc_config = idx
        window_load = max_in_window(scenario.load_schedule, state.t_ms,
                                    state.t_ms + opts.quantum_ms)
        tail = _tail_latency(scenario, state, idx, window_load)
        qos_met = tail <= scenario.qos_target_ms

    plan = QuantumPlan(
        phases=[Phase("steady", quantum_us)], chosen=chosen,
        core_states={a: "active" for a in ids},
        lc_cores=state.lc_cores)
    plan.check(quantum_us)
    mean_p, peak_p, over_us = ledger.power_stats(quantum_us, budget.max_power)
    instr = ledger.instructions()
    report = QuantumReport(
        instructions={a: instr.get(a, 0.0) for a in ids},
        total_instructions=sum(instr.get(a, 0.0) for a in ids),
        geomean_bips=_geomean_active(scenario, chosen, set()),
        mean_power=mean_p, peak_power=peak_p,
        qos_met=qos_met, tail_latency_ms=tail, power_over_budget_us=over_us)
    state.prev_configs = dict(chosen)
    return plan, report


# ---------------------------------------------------------------------------
# trace driver


def run_manager_quantum(kind: str, state: RuntimeState, scenario: Scenario,
                        budget: Budget) -> tuple[QuantumPlan, QuantumReport]:
    if kind == "cuttlesys":
        return run_quantum_cuttlesys(state, scenario, budget)
    if kind == "two_step":
        return run_quantum_two_step(state, scenario, budget)
    if kind == "one_step":
        return run_quantum_one_step(state, scenario, budget)
    if kind == "core_gating":
        return run_quantum_core_gating(state, scenario, budget, False)
    if kind == "core_gating_waypart":
        return run_quantum_core_gating(state, scenario, budget, True)
    if kind == "asym_oracle":
        return run_quantum_asym(state, scenario, budget)
    if kind == "asym_5050":
        return run_quantum_asym(state, scenario, budget,
                                fixed_big=scenario.n_cores // 2)
    if kind == "no_gating":
        return run_quantum_no_gating(state, scenario, budget)
    raise ValueError(f"unknown manager {kind!r}")


ROW_COLUMNS = ("t_ms,manager,cap,qps_load,lc_config,lc_cores,qos_met,tail_ms,"
               "geomean_bips,total_instr,mean_power,over_budget_ms")


@dataclass
class TraceResult:
    manager: str
    plans: list[QuantumPlan]
    reports: list[QuantumReport]
    rows: list[dict]

    @property
    def total_instructions(self) -> float:
        return sum(r.total_instructions for r in self.reports)

    @property
    def qos_met_fraction(self) -> float:
        flags = [r.qos_met for r in self.reports if r.qos_met is not None]
        return sum(flags) / len(flags) if flags else 1.0

    @property
    def mean_power(self) -> float:
        return float(np.mean([r.mean_power for r in self.reports]))


def run_trace(scenario: Scenario, manager: str, *, duration_ms: float,
              cap: float | None = None,
              opts: RuntimeOptions | None = None) -> TraceResult:
    """Run whole quanta of one manager over a scenario window.

    A fixed cap overrides the scenario's cap schedule. Decisions read the
    schedules at the quantum start; mid-quantum steps take effect at the
    next boundary.
    """
    if manager not in MANAGER_KINDS:
        raise ValueError(f"unknown manager {manager!r}")
    opts = opts or RuntimeOptions()
    quantum_ms = opts.quantum_ms
    n_quanta = duration_ms / quantum_ms
    if abs(n_quanta - round(n_quanta)) > 1e-9 or round(n_quanta) < 1:
        raise ValueError("duration must be a positive multiple of the quantum")
    scenario.validate()
    state = RuntimeState.fresh(scenario, opts)
    plans: list[QuantumPlan] = []
    reports: list[QuantumReport] = []
    rows: list[dict] = []
    for q in range(round(n_quanta)):
        state.quantum = q
        state.t_ms = q * quantum_ms
        cap_f = cap if cap is not None else scenario.cap_at(state.t_ms)
        budget = Budget(max_power=scenario.power_budget(cap_f),
                        cache_ways=float(scenario.space.total_ways),
                        qos_ms=scenario.qos_target_ms or None)
        lc_cores_at_decision = state.lc_cores
        plan, report = run_manager_quantum(manager, state, scenario, budget)
        plans.append(plan)
        reports.append(report)
        lc_id = scenario.lc_apps[0].app_id if scenario.lc_count else None
        rows.append({
            "t_ms": state.t_ms,
            "manager": manager,
            "cap": cap_f,
            "qps_load": scenario.load_at(state.t_ms),
            "lc_config": plan.chosen.get(lc_id, "") if lc_id else "",
            "lc_cores": lc_cores_at_decision,
            "qos_met": "" if report.qos_met is None else int(report.qos_met),
            "tail_ms": "" if report.tail_latency_ms is None
                       else round(report.tail_latency_ms, 6),
            "geomean_bips": round(report.geomean_bips, 9),
            "total_instr": round(report.total_instructions, 9),
            "mean_power": round(report.mean_power, 9),
            "over_budget_ms": report.power_over_budget_us / 1000.0,
        })
    return TraceResult(manager, plans, reports, rows)
