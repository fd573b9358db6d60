"""Allocation search: penalized objective, DDS, a GA baseline, exact oracle.

A decision vector assigns one configuration index per application. Batch
throughput is scored as a geometric mean; power and cache overruns subtract
soft penalties so infeasible points stay comparable. The dynamically
dimensioned search perturbs a shrinking random subset of dimensions around
the incumbent; a generational GA and an exhaustive scan serve as baselines.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .config_space import HeteroSpace


class SpaceTooLarge(ValueError):
    """Exhaustive enumeration refused; the free space exceeds the guard."""


class InfeasibleBudget(RuntimeError):
    """No deactivation order can bring power under the budget."""


def geomean(values) -> float:
    """Geometric mean computed in log space; requires positive inputs."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("geomean of no values")
    if (arr <= 0).any():
        raise ValueError("geomean requires positive values")
    return float(np.exp(np.mean(np.log(arr))))


@dataclass(frozen=True)
class Budget:
    max_power: float
    cache_ways: float = 32.0
    qos_ms: float | None = None

    def __post_init__(self):
        if self.max_power <= 0 or self.cache_ways <= 0:
            raise ValueError("budget limits must be positive")


class EvalMetrics(NamedTuple):
    score: float
    geomean: float
    power: float
    cache: float
    feasible: bool


@dataclass
class PredictionTables:
    """Per-dimension response tables the objective reads.

    Row order defines the decision-vector dimension order. ``power`` is per
    core configuration (cache-independent); ``power_scale`` carries duty
    factors for time-shared batch cores and the core count for the
    latency-critical service.
    """

    space: object
    app_ids: list[str]
    bips: np.ndarray          # (N, size)
    power: np.ndarray         # (N, m)
    power_scale: np.ndarray   # (N,)

    def __post_init__(self):
        n = len(self.app_ids)
        size = self.space.size
        if self.bips.shape != (n, size):
            raise ValueError(f"bips table must be {(n, size)}, got {self.bips.shape}")
        m = size // self.space.n_cache_options
        if self.power.shape != (n, m):
            raise ValueError(f"power table must be {(n, m)}, got {self.power.shape}")
        if self.power_scale.shape != (n,):
            raise ValueError("power_scale must be one entry per app")

    @classmethod
    def build(cls, space, app_ids: Sequence[str],
              bips_by_app: dict[str, np.ndarray],
              power_by_app: dict[str, np.ndarray],
              power_scale: dict[str, float] | None = None,
              bips_floor: float = 1e-6) -> "PredictionTables":
        """Assemble tables from per-app predictions.

        Apps missing a throughput row (the latency-critical service) get a
        row of ones, which the objective never reads because their dimension
        is fixed. Throughput is floored at ``bips_floor``: clamped
        reconstructions may contain zeros and the geomean needs positives.
        """
        size = space.size
        m = size // space.n_cache_options
        bips = np.ones((len(app_ids), size))
        power = np.zeros((len(app_ids), m))
        scale = np.ones(len(app_ids))
        for i, app in enumerate(app_ids):
            if app in bips_by_app:
                bips[i] = np.maximum(bips_by_app[app], bips_floor)
            power[i] = power_by_app[app]
            if power_scale and app in power_scale:
                scale[i] = power_scale[app]
        return cls(space, list(app_ids), bips, power, scale)


def _index_maps(space) -> tuple[np.ndarray, np.ndarray]:
    size = space.size
    cfg = np.arange(size, dtype=np.int64) // space.n_cache_options
    ways = np.array([space.cache_ways_of(i) for i in range(size)], dtype=float)
    return cfg, ways


def system_power(x, tables: PredictionTables) -> float:
    """Total predicted watts: additive over every app, scales applied."""
    idx = np.asarray(x, dtype=np.int64)
    cfg, _ = _index_maps(tables.space)
    per_app = tables.power[np.arange(len(idx)), cfg[idx]] * tables.power_scale
    return float(per_app.sum())


def system_cache(x, space) -> float:
    """Total allocated LLC ways: additive over every app."""
    _, ways = _index_maps(space)
    return float(ways[np.asarray(x, dtype=np.int64)].sum())


class ConstrainedObjective:
    """Soft-penalty score over batch throughput under power/cache budgets.

    Dimensions listed in ``fixed_dims`` (the latency-critical service) keep
    their assignment, contribute power and cache, and stay out of the
    geometric mean.
    """

    def __init__(self, tables: PredictionTables, budget: Budget,
                 penalty_wt: float = 2.0,
                 fixed_dims: dict[int, int] | None = None,
                 validity: Callable[[Sequence[int]], bool] | None = None):
        self.tables = tables
        self.budget = budget
        self.penalty_wt = penalty_wt
        self.fixed_dims = dict(fixed_dims or {})
        self.validity = validity
        n = len(tables.app_ids)
        self.free = np.array([d for d in range(n) if d not in self.fixed_dims],
                             dtype=np.int64)
        self._cfg, self._ways = _index_maps(tables.space)
        self._rows = np.arange(n)

    def evaluate(self, x) -> EvalMetrics:
        idx = np.asarray(x, dtype=np.int64)
        free_bips = self.tables.bips[self.free, idx[self.free]]
        if (free_bips <= 0).any():
            raise ValueError("geomean requires positive values")
        gm = float(np.exp(np.mean(np.log(free_bips))))
        power = float((self.tables.power[self._rows, self._cfg[idx]]
                       * self.tables.power_scale).sum())
        cache = float(self._ways[idx].sum())
        if self.validity is not None and not self.validity(idx):
            return EvalMetrics(-math.inf, gm, power, cache, False)
        over_p = max(0.0, power - self.budget.max_power)
        over_c = max(0.0, cache - self.budget.cache_ways)
        score = gm - self.penalty_wt * over_p - self.penalty_wt * over_c
        return EvalMetrics(score, gm, power, cache, over_p == 0.0 and over_c == 0.0)

    def __call__(self, x) -> float:
        return self.evaluate(x).score


def lc_config_select(latency_predictions, power_predictions, qos: float,
                     space) -> int | None:
    """Cheapest allocation whose predicted tail latency meets the target.

    Scans all m*p allocations; among qos-feasible ones picks minimal power,
    then minimal cache ways, then lowest index. None when nothing qualifies
    (the runtime answers that with core relocation).
    """
    lat = np.asarray(latency_predictions, dtype=float)
    pw = np.asarray(power_predictions, dtype=float)
    if lat.shape != (space.size,) or pw.shape != (space.size,):
        raise ValueError("predictions must cover every allocation index")
    _, ways = _index_maps(space)
    feasible = np.nonzero(lat <= qos)[0]
    if feasible.size == 0:
        return None
    order = np.lexsort((feasible, ways[feasible], pw[feasible]))
    return int(feasible[order[0]])


def power_repair(x, per_app_power: Sequence[float], max_power: float,
                 protected: Iterable[int] = ()) -> tuple[list[int], set[int]]:
    """Deactivate the hungriest batch apps until power fits the budget.

    ``per_app_power`` holds each dimension's current contribution in watts.
    Protected dimensions (the latency-critical service) are never touched.
    Returns the unchanged assignment plus the set of deactivated dims.
    """
    x = list(x)
    protected = set(protected)
    power = [float(p) for p in per_app_power]
    total = sum(power)
    off: set[int] = set()
    order = sorted((d for d in range(len(x)) if d not in protected),
                   key=lambda d: (-power[d], d))
    for d in order:
        if total <= max_power:
            break
        total -= power[d]
        off.add(d)
    if total > max_power:
        raise InfeasibleBudget(
            f"power {total:.3f} W over budget {max_power:.3f} W with all "
            f"batch cores off")
    return x, off


def one_step_validity(x, hetero: HeteroSpace, n_big: int, n_small: int) -> bool:
    """Core-count feasibility of a joint assignment on an asymmetric chip."""
    big = sum(1 for i in x if hetero.is_big(int(i)))
    return big <= n_big and (len(x) - big) <= n_small


# ---------------------------------------------------------------------------
# searchers


@dataclass
class DdsParams:
    initial_random_points: int = 50
    r_values: tuple[float, float, float, float] = (0.2, 0.3, 0.4, 0.5)
    penalty_wt: float = 2.0
    points_per_iteration: int = 10
    max_iter: int = 40
    workers: int = 4
    seed: int = 0


@dataclass
class GaParams:
    population: int = 20
    generations: int = 25
    crossover_rate: float = 0.9
    mutation_rate: float | None = None    # default 1/free_dims
    seed: int = 0


@dataclass(frozen=True)
class EvalRecord:
    iteration: int
    worker: int
    score: float
    power: float
    cache: float
    feasible: bool


class SearchOutcome(NamedTuple):
    best: tuple[int, ...]
    score: float
    log: list[EvalRecord]


EVAL_COLUMNS = "iter,worker,score,power,cache,feasible"


def evals_to_csv(log: Iterable[EvalRecord]) -> str:
    lines = [EVAL_COLUMNS]
    for r in log:
        lines.append(f"{r.iteration},{r.worker},{r.score!r},{r.power!r},"
                     f"{r.cache!r},{int(r.feasible)}")
    return "\n".join(lines) + "\n"


def _metric_fn(objective) -> Callable[[Sequence[int]], EvalMetrics]:
    ev = getattr(objective, "evaluate", None)
    if ev is not None:
        return ev

    def wrap(x) -> EvalMetrics:
        s = float(objective(x))
        return EvalMetrics(s, s, 0.0, 0.0, True)
    return wrap


def _dim_bounds(n_dims: int, n_confs: int,
                bounds: Sequence[tuple[int, int]] | None) -> list[tuple[int, int]]:
    if bounds is None:
        return [(0, n_confs - 1)] * n_dims
    bounds = [(int(lo), int(hi)) for lo, hi in bounds]
    if len(bounds) != n_dims:
        raise ValueError("one (lo, hi) bound per dimension required")
    for lo, hi in bounds:
        if not (0 <= lo <= hi <= n_confs - 1):
            raise ValueError(f"bad dimension bounds ({lo}, {hi})")
    return bounds


def _reflect(v: float, lo: int, hi: int) -> int:
    # Reflect about the violated bound until inside, then round half-up.
    if lo == hi:
        return lo
    while v < lo or v > hi:
        if v > hi:
            v = 2.0 * hi - v
        if v < lo:
            v = 2.0 * lo - v
    return int(math.floor(v + 0.5))


def _random_vector(rng, bounds, fixed: dict[int, int]) -> list[int]:
    x = [int(rng.integers(lo, hi + 1)) for lo, hi in bounds]
    for d, v in fixed.items():
        x[d] = v
    return x


def dds_search(params: DdsParams, objective, n_dims: int, n_confs: int,
               fixed_dims: dict[int, int] | None = None,
               bounds: Sequence[tuple[int, int]] | None = None,
               initial_sampler: Callable[[np.random.Generator], Sequence[int]] | None = None,
               ) -> SearchOutcome:
    """Dynamically dimensioned search around a shared incumbent.

    Every worker perturbs a random subset of free dimensions whose size
    shrinks as iterations advance (inclusion probability 1 - log(i)/log(max)),
    with a worker-group step scale r. Workers evolve a local best greedily
    and the global best is reduced at the end of each iteration; per-worker
    generator streams make the result deterministic for a fixed seed and
    worker count regardless of execution schedule.
    """
    fixed = dict(fixed_dims or {})
    bnds = _dim_bounds(n_dims, n_confs, bounds)
    free_dims = [d for d in range(n_dims) if d not in fixed]
    if not free_dims:
        raise ValueError("no free dimensions to search")
    measure = _metric_fn(objective)
    ss = np.random.SeedSequence(params.seed)
    children = ss.spawn(params.workers + 1)
    init_rng = np.random.default_rng(children[params.workers])
    worker_rngs = [np.random.default_rng(c) for c in children[:params.workers]]

    log: list[EvalRecord] = []
    best_x: tuple[int, ...] | None = None
    best = -math.inf
    for _ in range(params.initial_random_points):
        if initial_sampler is not None:
            x = list(initial_sampler(init_rng))
            for d, v in fixed.items():
                x[d] = v
        else:
            x = _random_vector(init_rng, bnds, fixed)
        met = measure(x)
        log.append(EvalRecord(0, 0, met.score, met.power, met.cache, met.feasible))
        if met.score > best:
            best, best_x = met.score, tuple(x)

    for i in range(1, params.max_iter + 1):
        if params.max_iter > 1:
            p = max(0.0, 1.0 - math.log(i) / math.log(params.max_iter))
        else:
            p = 1.0
        iter_best, iter_best_x = best, best_x
        for w in range(params.workers):
            rng = worker_rngs[w]
            # proportional quartering: first quarter of workers use r_values[0]
            r = params.r_values[w * len(params.r_values) // params.workers]
            local_x, local = list(best_x), best
            for _ in range(params.points_per_iteration):
                dims = [d for d in free_dims if rng.random() < p]
                if not dims:
                    dims = [free_dims[int(rng.integers(len(free_dims)))]]
                cand = list(local_x)
                for d in dims:
                    lo, hi = bnds[d]
                    span = hi - lo + 1
                    v = _reflect(cand[d] + r * span * rng.standard_normal(), lo, hi)
                    if v == cand[d]:
                        # zero step: redraw once, then accept whatever falls out
                        v = _reflect(cand[d] + r * span * rng.standard_normal(), lo, hi)
                    cand[d] = v
                met = measure(cand)
                log.append(EvalRecord(i, w, met.score, met.power, met.cache,
                                      met.feasible))
                if met.score > local:
                    local, local_x = met.score, cand
            if local > iter_best:
                iter_best, iter_best_x = local, tuple(local_x)
        best, best_x = iter_best, iter_best_x
    return SearchOutcome(best_x, best, log)


def ga_search(params: GaParams, objective, n_dims: int, n_confs: int,
              fixed_dims: dict[int, int] | None = None,
              bounds: Sequence[tuple[int, int]] | None = None,
              workers: int = 1) -> tuple[tuple[int, ...], float]:
    """Generational GA baseline: tournament of 2, uniform crossover,
    per-gene uniform mutation, elitism of one. Each worker is an island
    evaluating population x generations candidates."""
    fixed = dict(fixed_dims or {})
    bnds = _dim_bounds(n_dims, n_confs, bounds)
    free_dims = [d for d in range(n_dims) if d not in fixed]
    if not free_dims:
        raise ValueError("no free dimensions to search")
    measure = _metric_fn(objective)
    mut = params.mutation_rate if params.mutation_rate is not None else 1.0 / len(free_dims)
    best_x: tuple[int, ...] | None = None
    best = -math.inf
    children = np.random.SeedSequence(params.seed).spawn(workers)
    for w in range(workers):
        rng = np.random.default_rng(children[w])
        pop = [_random_vector(rng, bnds, fixed) for _ in range(params.population)]
        for _ in range(params.generations):
            scores = [measure(ind).score for ind in pop]
            gi = int(np.argmax(scores))
            if scores[gi] > best:
                best, best_x = scores[gi], tuple(pop[gi])
            nxt = [list(pop[gi])]    # elitism of 1
            while len(nxt) < params.population:
                a = _tournament(pop, scores, rng)
                b = _tournament(pop, scores, rng)
                if rng.random() < params.crossover_rate:
                    child = [a[d] if rng.random() < 0.5 else b[d]
                             for d in range(n_dims)]
                else:
                    child = list(a)
                for d in free_dims:
                    if rng.random() < mut:
                        lo, hi = bnds[d]
                        child[d] = int(rng.integers(lo, hi + 1))
                for d, v in fixed.items():
                    child[d] = v
                nxt.append(child)
            pop = nxt
    return best_x, best


def _tournament(pop, scores, rng) -> list[int]:
    i = int(rng.integers(len(pop)))
    j = int(rng.integers(len(pop)))
    return pop[i] if scores[i] >= scores[j] else pop[j]


def brute_force(objective, n_dims: int, n_confs: int,
                fixed_dims: dict[int, int] | None = None,
                bounds: Sequence[tuple[int, int]] | None = None,
                guard: int = 10_000_000) -> tuple[tuple[int, ...], float]:
    """Exact argmax by lexicographic enumeration of the free dimensions."""
    fixed = dict(fixed_dims or {})
    bnds = _dim_bounds(n_dims, n_confs, bounds)
    free_dims = [d for d in range(n_dims) if d not in fixed]
    total = 1
    for d in free_dims:
        total *= bnds[d][1] - bnds[d][0] + 1
        if total > guard:
            raise SpaceTooLarge(f"free space exceeds {guard} points")
    measure = _metric_fn(objective)
    x = [0] * n_dims
    for d, v in fixed.items():
        x[d] = v
    best_x: tuple[int, ...] | None = None
    best = -math.inf
    ranges = [range(bnds[d][0], bnds[d][1] + 1) for d in free_dims]
    for combo in itertools.product(*ranges):
        for d, v in zip(free_dims, combo):
            x[d] = v
        score = measure(x).score
        if score > best:
            best, best_x = score, tuple(x)
    return best_x, best
