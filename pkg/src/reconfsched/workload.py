"""Synthetic workloads with exact ground truth.

Throughput over the configuration space follows saturating per-section width
curves and a saturating cache-ways curve; every app is a noisy mixture of a
small number of family surfaces, so the exact throughput matrix has rank at
most ``family_count``. Per-core power is affine in the section widths and
does not depend on the cache allocation. Latency-critical apps additionally
carry a tail-latency grid over (allocation, load) from an M/M/1-style
saturation law. All randomness is seeded; noise is baked in at generation
time so ground truth stays fixed for a scenario.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .config_space import ConfigSpace, HeteroSpace, space_from_dict, space_hash

log = logging.getLogger("reconfsched")

BATCH = "batch"
LATENCY_CRITICAL = "latency_critical"

DEFAULT_LOAD_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))


class ProfileParseError(ValueError):
    """Raised when a profile CSV cannot be parsed; message carries the line."""


@dataclass
class AppProfile:
    """Exact response surfaces of one application.

    ``bips`` is indexed by composite allocation index. ``power`` is per core
    config only (cache-independent), length size/n_cache_options. Latency
    rows exist only for latency-critical apps: ``tail_latency[index, k]`` is
    the tail latency in ms at ``load_grid[k]``.
    """

    app_id: str
    kind: str
    bips: np.ndarray
    power: np.ndarray
    n_cache_options: int
    tail_latency: np.ndarray | None = None
    load_grid: tuple[float, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return len(self.bips)

    def power_at(self, index: int) -> float:
        return float(self.power[index // self.n_cache_options])

    def latency_at(self, index: int, load: float) -> float:
        if self.tail_latency is None:
            raise ValueError(f"{self.app_id} has no latency surface")
        # np.interp clamps at the grid edges, which is what saturation wants.
        return float(np.interp(load, self.load_grid, self.tail_latency[index]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AppProfile):
            return NotImplemented
        lat_eq = (self.tail_latency is None) == (other.tail_latency is None) and (
            self.tail_latency is None
            or np.array_equal(self.tail_latency, other.tail_latency)
        )
        return (
            self.app_id == other.app_id
            and self.kind == other.kind
            and np.array_equal(self.bips, other.bips)
            and np.array_equal(self.power, other.power)
            and self.n_cache_options == other.n_cache_options
            and lat_eq
            and self.load_grid == other.load_grid
        )


class GroundTruth(NamedTuple):
    bips: float
    watts: float
    latency_ms: float | None


def ground_truth(profile: AppProfile, index: int, load: float | None = None) -> GroundTruth:
    """Exact (throughput, power, tail latency) at one allocation index."""
    lat = None
    if profile.tail_latency is not None:
        lat = profile.latency_at(index, 0.0 if load is None else load)
    return GroundTruth(float(profile.bips[index]), profile.power_at(index), lat)


# ---------------------------------------------------------------------------
# generation


def _sat(w: np.ndarray, alpha: float, c: float) -> np.ndarray:
    wa = np.power(w, alpha)
    return wa / (wa + c)


def _monotonize_block(arr: np.ndarray, ascending_axes: Sequence[bool], increasing: bool) -> np.ndarray:
    """Force weak monotonicity along every axis of a dense grid.

    ``ascending_axes[d]`` says whether coordinate d is laid out small-to-large.
    ``increasing`` picks the direction of the enforced monotonicity in the
    underlying quantity.
    """
    out = arr
    acc = np.maximum.accumulate if increasing else np.minimum.accumulate
    for ax, asc in enumerate(ascending_axes):
        if asc:
            out = acc(out, axis=ax)
        else:
            out = np.flip(acc(np.flip(out, axis=ax), axis=ax), axis=ax)
    return out


def _monotonize(values: np.ndarray, space, *, per_core_config: bool, increasing: bool) -> np.ndarray:
    """Monotonize a flat per-index array on the space's width/ways grid."""
    if isinstance(space, HeteroSpace):
        out = values.copy()
        ns, ls = space.n_small, len(space.small_levels)
        lb = len(space.big_levels)
        small = out[:ns].reshape(ls, ls, ls)
        big = out[ns:].reshape(lb, lb, lb)
        # Layout is widest-first on every width axis.
        small[...] = _monotonize_block(small, [False] * 3, increasing)
        big[...] = _monotonize_block(big, [False] * 3, increasing)
        return out
    L = len(space.levels)
    if per_core_config:
        grid = values.reshape(L, L, L)
        return _monotonize_block(grid, [False] * 3, increasing).reshape(-1)
    grid = values.reshape(L, L, L, space.n_cache_options)
    # Cache options are stored ascending; width axes widest-first.
    return _monotonize_block(grid, [False, False, False, True], increasing).reshape(-1)


class _Synth:
    """One seeded generation session; family surfaces are drawn once."""

    def __init__(self, rng: np.random.Generator, space, family_count: int,
                 noise_sigma: float, mix_alpha: float):
        self.rng = rng
        self.space = space
        self.F = family_count
        self.sigma = noise_sigma
        self.mix_alpha = mix_alpha

        size = space.size
        widths = np.array([space.widths_of(i) for i in range(size)], dtype=float)
        ways = np.array([space.cache_ways_of(i) for i in range(size)], dtype=float)
        def ranged(raw: np.ndarray, floor: float) -> np.ndarray:
            # Affine re-range onto [floor, 1]: keeps the saturating shape and
            # monotonicity but caps the dynamic range at realistic ratios.
            lo, hi = raw.min(), raw.max()
            if hi - lo < 1e-12:
                return np.ones_like(raw)
            return floor + (1.0 - floor) * (raw - lo) / (hi - lo)

        def family_surface(alpha_lo, alpha_hi, c_lo, c_hi, w_floor, cache_floor):
            f = np.ones(size)
            for s in range(3):
                a = rng.uniform(alpha_lo, alpha_hi)
                c = rng.uniform(c_lo, c_hi)
                floor = rng.uniform(*w_floor)
                f = f * ranged(_sat(widths[:, s], a, c), floor)
            b = rng.uniform(alpha_lo, alpha_hi)
            d = rng.uniform(c_lo, c_hi)
            f = f * ranged(_sat(ways, b, d), rng.uniform(*cache_floor))
            return f

        # Throughput families: a few x end-to-end width/cache sensitivity.
        self.thr_surfaces = np.stack(
            [family_surface(0.8, 2.2, 0.8, 4.0, (0.75, 0.90), (0.60, 0.82))
             for _ in range(self.F)]
        )
        # Power families: affine in widths, cache-independent.
        m = size // space.n_cache_options
        cfg_widths = widths[:: space.n_cache_options] if space.n_cache_options > 1 else widths
        pw = []
        for _ in range(self.F):
            p0 = rng.uniform(0.06, 0.14)
            kappa = rng.uniform(0.035, 0.065, size=3)
            pw.append(p0 + cfg_widths @ kappa)
        self.pow_surfaces = np.stack(pw)  # (F, m)
        # Latency families: speed surfaces with milder sensitivity.
        self.spd_surfaces = np.stack(
            [family_surface(0.9, 1.8, 0.8, 3.0, (0.80, 0.92), (0.70, 0.88))
             for _ in range(self.F)]
        )

    def _mixture(self) -> np.ndarray:
        return self.rng.dirichlet(np.full(self.F, self.mix_alpha))

    def _noisy(self, values: np.ndarray, sigma: float) -> np.ndarray:
        z = self.rng.standard_normal(values.shape)
        # Mean-one lognormal keeps measured expectations unbiased downstream.
        return values * np.exp(sigma * z - 0.5 * sigma * sigma)

    def batch(self, app_id: str, kind: str = BATCH) -> AppProfile:
        mix = self._mixture()
        base = math.exp(self.rng.uniform(math.log(0.5), math.log(3.0)))
        exact = base * (mix @ self.thr_surfaces)
        bips = _monotonize(self._noisy(exact, self.sigma), self.space,
                           per_core_config=False, increasing=True)
        pscale = self.rng.uniform(0.8, 1.2)
        power = pscale * (mix @ self.pow_surfaces)
        power = _monotonize(self._noisy(power, 0.5 * self.sigma), self.space,
                            per_core_config=True, increasing=True)
        tail = None
        grid: tuple[float, ...] = ()
        if kind == LATENCY_CRITICAL:
            tail, grid = self._latency_grid()
        return AppProfile(app_id, kind, bips, power, self.space.n_cache_options,
                          tail_latency=tail, load_grid=grid)

    def _latency_grid(self, sat_margin: float = 0.97,
                      denom_floor: float = 0.005) -> tuple[np.ndarray, tuple[float, ...]]:
        mix = self._mixture()
        speed = mix @ self.spd_surfaces
        speed = speed / speed.max()
        speed = _monotonize(self._noisy(speed, self.sigma), self.space,
                            per_core_config=False, increasing=True)
        s_base = self.rng.uniform(1.0, 3.0)
        service = s_base / np.clip(speed, 1e-9, None)
        # Load is a fraction of the fastest allocation's saturation capacity.
        s_sat = service.min() / sat_margin
        loads = np.array(DEFAULT_LOAD_GRID)
        denom = 1.0 - np.outer(service / s_sat, loads)
        tail = service[:, None] / np.clip(denom, denom_floor, None)
        return tail, DEFAULT_LOAD_GRID

    def lc(self, app_id: str) -> AppProfile:
        return self.batch(app_id, kind=LATENCY_CRITICAL)


def _normalize_power(profiles: Iterable[AppProfile]) -> None:
    """Scale all power surfaces jointly so the hottest (app, config) is 1.0."""
    profiles = list(profiles)
    peak = max(float(p.power.max()) for p in profiles)
    for p in profiles:
        p.power = p.power / peak


def generate_synthetic(seed: int, n_batch: int, space, family_count: int = 4,
                       *, noise_sigma: float = 0.03, mix_alpha: float = 0.3,
                       n_lc: int = 0) -> list[AppProfile]:
    """Generate batch apps (plus optional latency-critical ones) for a space.

    Deterministic per seed. Power is normalized within the generated set so
    the hottest per-core draw equals 1.0 and caps can be read as fractions.
    """
    rng = np.random.default_rng(seed)
    synth = _Synth(rng, space, family_count, noise_sigma, mix_alpha)
    profiles = [synth.batch(f"app{i:02d}") for i in range(n_batch)]
    profiles += [synth.lc(f"svc{i:02d}") for i in range(n_lc)]
    _normalize_power(profiles)
    return profiles


@dataclass
class WorkloadSet:
    """Active apps, offline-characterized training apps, and the LC service."""

    active_batch: list[AppProfile]
    training: list[AppProfile]
    lc: list[AppProfile]

    @property
    def all_profiles(self) -> list[AppProfile]:
        return self.active_batch + self.lc + self.training


def generate_workload(seed: int, space, n_active: int, n_training: int = 16,
                      n_lc: int = 1, n_lc_training: int = 8,
                      family_count: int = 4, *, noise_sigma: float = 0.03,
                      mix_alpha: float = 0.3) -> WorkloadSet:
    """One generation session for a whole scenario, jointly normalized."""
    rng = np.random.default_rng(seed)
    synth = _Synth(rng, space, family_count, noise_sigma, mix_alpha)
    training = [synth.batch(f"trn{i:02d}") for i in range(n_training)]
    training += [synth.lc(f"ltr{i:02d}") for i in range(n_lc_training)]
    active = [synth.batch(f"app{i:02d}") for i in range(n_active)]
    lc = [synth.lc(f"svc{i:02d}") for i in range(n_lc)]
    _normalize_power(training + active + lc)
    return WorkloadSet(active_batch=active, training=training, lc=lc)


# ---------------------------------------------------------------------------
# schedules and scenarios

Schedule = list[tuple[float, float]]


def value_at(schedule: Schedule, t_ms: float) -> float:
    """Step-function lookup; schedules are [(t_ms, value), ...], t ascending."""
    if not schedule or schedule[0][0] != 0:
        raise ValueError("schedule must start at t=0")
    v = schedule[0][1]
    for ts, val in schedule:
        if ts <= t_ms:
            v = val
        else:
            break
    return v


def max_in_window(schedule: Schedule, t0: float, t1: float) -> float:
    """Largest schedule value prevailing anywhere in [t0, t1)."""
    v = value_at(schedule, t0)
    for ts, val in schedule:
        if t0 < ts < t1:
            v = max(v, val)
    return v


@dataclass
class Scenario:
    """A machine, its apps, and the scripted cap/load traces."""

    space: object
    apps: list[AppProfile]
    training: list[AppProfile]
    n_cores: int
    lc_count: int
    power_cap_schedule: Schedule
    load_schedule: Schedule
    qos_target_ms: float
    qos_slack: float = 0.2
    seed: int = 0

    @property
    def batch_apps(self) -> list[AppProfile]:
        return [a for a in self.apps if a.kind == BATCH]

    @property
    def lc_apps(self) -> list[AppProfile]:
        return [a for a in self.apps if a.kind == LATENCY_CRITICAL]

    def cap_at(self, t_ms: float) -> float:
        return value_at(self.power_cap_schedule, t_ms)

    def load_at(self, t_ms: float) -> float:
        return value_at(self.load_schedule, t_ms)

    def power_budget(self, cap_fraction: float) -> float:
        # Per-core power is normalized to 1.0 at the hottest draw.
        return cap_fraction * self.n_cores

    def validate(self) -> None:
        for ts, cap in self.power_cap_schedule:
            if not 0 < cap <= 1:
                raise ValueError(f"power cap fraction {cap} not in (0, 1]")
        for sched in (self.power_cap_schedule, self.load_schedule):
            if not sched or sched[0][0] != 0:
                raise ValueError("schedules must start at t=0")
            if [t for t, _ in sched] != sorted(t for t, _ in sched):
                raise ValueError("schedule times must ascend")
        if self.lc_count < 0 or self.lc_count >= self.n_cores:
            raise ValueError("lc_count must be in [0, n_cores)")
        if self.lc_count and not self.lc_apps:
            raise ValueError("lc_count > 0 but no latency-critical app")
        if len(self.batch_apps) == 0:
            raise ValueError("scenario has no batch apps")


def generate_scenario(seed: int, n_apps: int = 32, space=None, *,
                      family_count: int = 4, hetero: bool = False,
                      noise_sigma: float = 0.03) -> Scenario:
    """Reference scenario: one app per core, diurnal load, cap 1.0.

    Homogeneous scenarios split cores 50/50 between the latency-critical
    service and batch apps and carry an offline training set. Heterogeneous
    scenarios are batch-only (half big cores, half small).
    """
    if n_apps < 2 or n_apps % 2:
        raise ValueError("n_apps must be even and >= 2")
    if space is None:
        space = HeteroSpace() if hetero else ConfigSpace()
    if hetero:
        ws = generate_workload(seed, space, n_active=n_apps, n_training=0,
                               n_lc=0, n_lc_training=0, family_count=family_count,
                               noise_sigma=noise_sigma)
        return Scenario(
            space=space, apps=ws.active_batch, training=[], n_cores=n_apps,
            lc_count=0, power_cap_schedule=[(0.0, 1.0)],
            load_schedule=[(0.0, 0.0)], qos_target_ms=0.0, seed=seed,
        )
    n_active = n_apps // 2
    ws = generate_workload(seed, space, n_active=n_active, n_training=n_apps - n_active,
                           n_lc=1, n_lc_training=8, family_count=family_count,
                           noise_sigma=noise_sigma)
    lc = ws.lc[0]
    top = space.index_of(space.widest, max(space.cache_options))
    qos = 1.12 * lc.latency_at(top, 0.85)
    duration = 2000.0
    shape = [0.3, 0.5, 0.7, 0.85, 0.95, 0.9, 0.8, 0.6, 0.4, 0.25]
    step = duration / len(shape)
    load_schedule = [(round(i * step, 3), v) for i, v in enumerate(shape)]
    return Scenario(
        space=space,
        apps=ws.active_batch + [lc],
        training=ws.training,
        n_cores=n_apps,
        lc_count=n_apps // 2,
        power_cap_schedule=[(0.0, 1.0)],
        load_schedule=load_schedule,
        qos_target_ms=qos,
        qos_slack=0.2,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# persistence

PROFILE_COLUMNS = "app_id,kind,config_index,bips,watts,latency_ms,load"


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def monotone_violations(profile: AppProfile, space) -> int:
    """Count allocation pairs whose throughput ordering is inverted.

    Two allocations are comparable when every width and the way share agree
    in direction; on a heterogeneous space the pair must also live on the
    same core class (equal widths on different physical cores need not tie).
    """
    count = 0
    size = profile.size
    widths = [space.widths_of(i) for i in range(size)]
    ways = [space.cache_ways_of(i) for i in range(size)]
    if isinstance(space, HeteroSpace):
        klass = [space.decode(i)[0] for i in range(size)]
    else:
        klass = ["core"] * size
    for i in range(size):
        for j in range(size):
            if i == j or klass[i] != klass[j]:
                continue
            wi, wj = widths[i], widths[j]
            if all(a <= b for a, b in zip(wi, wj)) and ways[i] <= ways[j]:
                if profile.bips[i] > profile.bips[j] + 1e-12:
                    count += 1
    return count


def save_profiles(profiles: Sequence[AppProfile], path: str | Path, space, *,
                  seed: int | None = None, training: bool = False) -> None:
    """Write the profile CSV plus a small summary JSON next to it."""
    path = Path(path)
    header = PROFILE_COLUMNS + (",training" if training else "")
    lines = [f"# seed={'' if seed is None else seed} space={space_hash(space)}", header]
    for p in profiles:
        for idx in range(p.size):
            gt = ground_truth(p, idx)
            if p.tail_latency is None:
                row = [p.app_id, p.kind, str(idx), _fmt(gt.bips), _fmt(gt.watts), "", ""]
                if training:
                    row.append("1")
                lines.append(",".join(row))
            else:
                for k, load in enumerate(p.load_grid):
                    row = [p.app_id, p.kind, str(idx), _fmt(gt.bips), _fmt(gt.watts),
                           _fmt(float(p.tail_latency[idx, k])), _fmt(load)]
                    if training:
                        row.append("1")
                    lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    summary = {"apps": len(profiles), "space": space_hash(space)}
    path.with_name(path.stem + "_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n"
    )


def load_profiles(path: str | Path, space) -> list[AppProfile]:
    """Read a profile CSV back; accepts the optional trailing training column.

    Raises ProfileParseError with the offending line number on bad input;
    non-monotone throughput is accepted with a warning flag on the profile.
    """
    path = Path(path)
    order: list[str] = []
    rows: dict[str, dict] = {}
    n_expected = len(PROFILE_COLUMNS.split(","))
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("app_id,"):
            continue
        parts = line.split(",")
        if len(parts) not in (n_expected, n_expected + 1):
            raise ProfileParseError(f"{path}:{lineno}: expected {n_expected} columns, got {len(parts)}")
        app_id, kind = parts[0], parts[1]
        try:
            idx = int(parts[2])
            bips = float(parts[3])
            watts = float(parts[4])
            lat = float(parts[5]) if parts[5] else None
            load = float(parts[6]) if parts[6] else None
        except ValueError as e:
            raise ProfileParseError(f"{path}:{lineno}: {e}") from None
        if kind not in (BATCH, LATENCY_CRITICAL):
            raise ProfileParseError(f"{path}:{lineno}: unknown kind {kind!r}")
        if not 0 <= idx < space.size:
            raise ProfileParseError(f"{path}:{lineno}: index {idx} outside space of {space.size}")
        if app_id not in rows:
            order.append(app_id)
            rows[app_id] = {"kind": kind, "bips": {}, "watts": {}, "lat": {}}
        r = rows[app_id]
        r["bips"][idx] = bips
        r["watts"][idx] = watts
        if lat is not None:
            if load is None:
                raise ProfileParseError(f"{path}:{lineno}: latency row missing load")
            r["lat"][(idx, load)] = lat

    out = []
    p = space.n_cache_options
    for app_id in order:
        r = rows[app_id]
        missing = set(range(space.size)) - set(r["bips"])
        if missing:
            raise ProfileParseError(f"{path}: app {app_id} missing {len(missing)} allocation rows")
        bips = np.array([r["bips"][i] for i in range(space.size)])
        power = np.array([r["watts"][i * p] for i in range(space.size // p)])
        tail = None
        grid: tuple[float, ...] = ()
        if r["lat"]:
            loads = sorted({l for (_, l) in r["lat"]})
            grid = tuple(loads)
            tail = np.empty((space.size, len(loads)))
            for i in range(space.size):
                for k, l in enumerate(loads):
                    if (i, l) not in r["lat"]:
                        raise ProfileParseError(
                            f"{path}: app {app_id} latency grid missing (index {i}, load {l})")
                    tail[i, k] = r["lat"][(i, l)]
        prof = AppProfile(app_id, r["kind"], bips, power, p,
                          tail_latency=tail, load_grid=grid)
        bad = monotone_violations(prof, space)
        if bad:
            log.warning("profile %s: %d non-monotone throughput pairs", app_id, bad)
            prof.warnings = (f"non-monotone throughput ({bad} pairs)",)
        out.append(prof)
    return out


def save_scenario(scenario: Scenario, directory: str | Path) -> Path:
    """Write scenario.json plus profiles/training CSVs into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_profiles(scenario.apps, directory / "profiles.csv", scenario.space,
                  seed=scenario.seed)
    doc = {
        "seed": scenario.seed,
        "n_cores": scenario.n_cores,
        "lc_count": scenario.lc_count,
        "qos_target_ms": scenario.qos_target_ms,
        "qos_slack": scenario.qos_slack,
        "power_cap_schedule": [[t, v] for t, v in scenario.power_cap_schedule],
        "load_schedule": [[t, v] for t, v in scenario.load_schedule],
        "space": scenario.space.to_dict(),
        "profiles": "profiles.csv",
    }
    if scenario.training:
        save_profiles(scenario.training, directory / "training.csv", scenario.space,
                      seed=scenario.seed, training=True)
        doc["training"] = "training.csv"
    path = directory / "scenario.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    doc = json.loads(path.read_text())
    space = space_from_dict(doc["space"])
    apps = load_profiles(path.parent / doc["profiles"], space)
    training = []
    if doc.get("training"):
        training = load_profiles(path.parent / doc["training"], space)
    scenario = Scenario(
        space=space,
        apps=apps,
        training=training,
        n_cores=int(doc["n_cores"]),
        lc_count=int(doc["lc_count"]),
        power_cap_schedule=[(float(t), float(v)) for t, v in doc["power_cap_schedule"]],
        load_schedule=[(float(t), float(v)) for t, v in doc["load_schedule"]],
        qos_target_ms=float(doc["qos_target_ms"]),
        qos_slack=float(doc.get("qos_slack", 0.2)),
        seed=int(doc.get("seed", 0)),
    )
    scenario.validate()
    return scenario
