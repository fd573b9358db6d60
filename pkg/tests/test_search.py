"""Search module tests: objective arithmetic against hand oracles, DDS and
GA behavior on tiny instances, exhaustive-scan agreement."""

import math

import numpy as np
import pytest

from reconfsched.config_space import ConfigSpace, HeteroSpace
from reconfsched.search import (
    Budget,
    ConstrainedObjective,
    DdsParams,
    EvalRecord,
    GaParams,
    InfeasibleBudget,
    PredictionTables,
    SpaceTooLarge,
    brute_force,
    dds_search,
    evals_to_csv,
    ga_search,
    geomean,
    lc_config_select,
    one_step_validity,
    power_repair,
    system_cache,
    system_power,
    _reflect,
)


def test_geomean_hand_values():
    assert geomean([2.0, 8.0]) == pytest.approx(4.0, rel=1e-12)
    assert geomean([3.7, 3.7, 3.7]) == pytest.approx(3.7, rel=1e-12)
    assert geomean([1.0, 4.0, 16.0]) == pytest.approx(4.0, rel=1e-12)
    assert geomean([5.0]) == pytest.approx(5.0, rel=1e-12)


def test_geomean_rejects_nonpositive_and_empty():
    with pytest.raises(ValueError):
        geomean([1.0, 0.0])
    with pytest.raises(ValueError):
        geomean([2.0, -3.0])
    with pytest.raises(ValueError):
        geomean([])


def test_budget_validation():
    with pytest.raises(ValueError):
        Budget(max_power=0.0)
    with pytest.raises(ValueError):
        Budget(max_power=10.0, cache_ways=-1.0)


# tiny space for table tests: 8 core configs x 2 cache options = 16 indices
SMALL = ConfigSpace(levels=(2, 6), cache_options=(1.0, 2.0))


def _tiny_tables(seed=7, n_apps=3, scale=None):
    rng = np.random.default_rng(seed)
    bips = rng.uniform(0.5, 2.0, size=(n_apps, SMALL.size))
    power = rng.uniform(1.0, 4.0, size=(n_apps, SMALL.n_core_configs))
    ids = [f"app{i}" for i in range(n_apps)]
    sc = np.ones(n_apps) if scale is None else np.asarray(scale, float)
    return PredictionTables(SMALL, ids, bips, power, sc)


def test_system_power_singleton_and_additivity():
    tables = _tiny_tables()
    x = [3, 9, 14]
    total = system_power(x, tables)
    manual = sum(tables.power[d, xi // 2] for d, xi in enumerate(x))
    assert total == pytest.approx(manual, rel=1e-12)
    one = _tiny_tables(n_apps=1)
    assert system_power([5], one) == pytest.approx(one.power[0, 2], rel=1e-12)


def test_system_power_applies_scales():
    tables = _tiny_tables(scale=[0.5, 1.0, 4.0])
    x = [0, 0, 0]
    expect = (0.5 * tables.power[0, 0] + tables.power[1, 0]
              + 4.0 * tables.power[2, 0])
    assert system_power(x, tables) == pytest.approx(expect, rel=1e-12)


def test_system_cache_half_way_times_32():
    space = ConfigSpace()    # cache options start at half a way
    x = [space.index_of(space.widest, 0.5)] * 32
    assert system_cache(x, space) == pytest.approx(16.0, rel=1e-12)


def test_objective_equals_geomean_when_feasible():
    tables = _tiny_tables()
    obj = ConstrainedObjective(tables, Budget(max_power=1e6, cache_ways=1e6))
    x = [1, 6, 12]
    gm = geomean([tables.bips[d, xi] for d, xi in enumerate(x)])
    met = obj.evaluate(x)
    assert met.score == pytest.approx(gm, rel=1e-12)
    assert met.feasible
    assert obj(x) == met.score


def test_objective_power_overrun_subtracts_weighted_excess():
    tables = _tiny_tables()
    x = [0, 2, 4]
    power = system_power(x, tables)
    cache = system_cache(x, SMALL)
    # budget set exactly one watt below demand: penalty weight 2 -> minus 2
    obj = ConstrainedObjective(tables, Budget(max_power=power - 1.0,
                                              cache_ways=cache))
    gm = geomean([tables.bips[d, xi] for d, xi in enumerate(x)])
    met = obj.evaluate(x)
    assert met.score == pytest.approx(gm - 2.0, rel=1e-10)
    assert not met.feasible
    assert met.power == pytest.approx(power, rel=1e-12)


def test_objective_cache_overrun_and_custom_weight():
    tables = _tiny_tables()
    x = [1, 3, 5]    # all 2-way rows
    assert system_cache(x, SMALL) == pytest.approx(6.0)
    obj = ConstrainedObjective(tables, Budget(max_power=1e6, cache_ways=4.0),
                               penalty_wt=3.0)
    gm = geomean([tables.bips[d, xi] for d, xi in enumerate(x)])
    assert obj(x) == pytest.approx(gm - 3.0 * 2.0, rel=1e-10)


def test_objective_fixed_dims_out_of_geomean_but_in_budgets():
    tables = _tiny_tables(n_apps=3, scale=[1.0, 1.0, 4.0])
    obj = ConstrainedObjective(tables, Budget(max_power=1e6, cache_ways=1e6),
                               fixed_dims={2: 9})
    x = [4, 8, 9]
    gm = geomean([tables.bips[0, 4], tables.bips[1, 8]])
    met = obj.evaluate(x)
    assert met.score == pytest.approx(gm, rel=1e-12)
    assert met.power == pytest.approx(system_power(x, tables), rel=1e-12)
    assert met.cache == pytest.approx(system_cache(x, SMALL), rel=1e-12)


def test_objective_validity_hook_sinks_score():
    tables = _tiny_tables()
    obj = ConstrainedObjective(tables, Budget(max_power=1e6, cache_ways=1e6),
                               validity=lambda x: int(x[0]) != 0)
    assert obj([0, 0, 0]) == -math.inf
    assert not obj.evaluate([0, 0, 0]).feasible
    assert obj.evaluate([1, 0, 0]).feasible


def test_objective_matches_manual_formula_on_vectors():
    tables = _tiny_tables(seed=11)
    budget = Budget(max_power=6.5, cache_ways=4.0)
    obj = ConstrainedObjective(tables, budget)
    for x in ([0, 0, 0], [15, 15, 15], [2, 7, 11], [1, 1, 1], [8, 3, 14]):
        gm = geomean([tables.bips[d, xi] for d, xi in enumerate(x)])
        p = system_power(x, tables)
        c = system_cache(x, SMALL)
        want = gm - 2.0 * max(0.0, p - 6.5) - 2.0 * max(0.0, c - 4.0)
        assert obj(x) == pytest.approx(want, rel=1e-10)


# --- latency-critical config selection ---------------------------------


def _lc_arrays():
    # power depends only on the core config; latency improves with cache
    cfg_power = np.array([9.0, 7.0, 5.0, 5.0, 6.0, 8.0, 7.0, 9.0])
    power = np.repeat(cfg_power, 2)
    lat = np.full(SMALL.size, 99.0)
    return power, lat


def test_lc_select_min_power_among_feasible():
    power, lat = _lc_arrays()
    lat[[4, 8, 12]] = [3.0, 2.5, 3.5]    # cfgs 2, 4, 6 feasible at 1 way
    got = lc_config_select(lat, power, qos=4.0, space=SMALL)
    assert got == 4    # cfg 2 at 5 W beats 6 W and 7 W


def test_lc_select_tie_prefers_fewer_ways_then_lower_index():
    power, lat = _lc_arrays()
    lat[[6, 7]] = 1.0    # cfg 3 feasible at both allocations, equal power
    assert lc_config_select(lat, power, qos=2.0, space=SMALL) == 6
    power2, lat2 = _lc_arrays()
    lat2[[4, 6]] = 1.0    # cfgs 2 and 3: equal 5 W, both 1 way
    assert lc_config_select(lat2, power2, qos=2.0, space=SMALL) == 4


def test_lc_select_exhaustive_oracle():
    rng = np.random.default_rng(3)
    power = np.repeat(rng.uniform(2.0, 9.0, SMALL.n_core_configs), 2)
    lat = rng.uniform(0.5, 6.0, SMALL.size)
    qos = 3.0
    got = lc_config_select(lat, power, qos, SMALL)
    feas = [i for i in range(SMALL.size) if lat[i] <= qos]
    want = min(feas, key=lambda i: (power[i], SMALL.cache_ways_of(i), i))
    assert got == want


def test_lc_select_none_when_all_miss():
    power, lat = _lc_arrays()
    assert lc_config_select(lat, power, qos=0.1, space=SMALL) is None


def test_lc_select_shape_check():
    power, lat = _lc_arrays()
    with pytest.raises(ValueError):
        lc_config_select(lat[:-1], power, 1.0, SMALL)


# --- power repair -------------------------------------------------------


def test_power_repair_sheds_hungriest_first():
    x, off = power_repair([0, 1, 2], [5.0, 3.0, 2.0], max_power=6.0)
    assert x == [0, 1, 2]
    assert off == {0}


def test_power_repair_noop_when_already_feasible():
    _, off = power_repair([3, 3], [2.0, 2.0], max_power=10.0)
    assert off == set()


def test_power_repair_tie_breaks_by_dimension_order():
    _, off = power_repair([0, 0], [3.0, 3.0], max_power=2.0)
    assert off == {0, 1}


def test_power_repair_protects_service_and_raises_when_stuck():
    _, off = power_repair([0, 0], [5.0, 3.0], max_power=6.0, protected={0})
    assert off == {1}
    with pytest.raises(InfeasibleBudget):
        power_repair([0, 0], [5.0, 3.0], max_power=2.0, protected={0})


# --- asymmetric-chip validity -------------------------------------------


HET = HeteroSpace()


def test_one_step_validity_counts_classes():
    small = HET.small_range[0]
    big = HET.big_range[0]
    assert one_step_validity([small] * 4 + [big] * 4, HET, n_big=4, n_small=4)
    assert not one_step_validity([small] * 3 + [big] * 5, HET, 4, 4)
    assert not one_step_validity([small] * 8, HET, n_big=4, n_small=4)
    assert one_step_validity([big] * 3, HET, n_big=3, n_small=0)


def test_one_step_validity_matches_binomial_rate():
    # 8 uniform dims over 35 indices, 27 of them big; validity needs exactly
    # 4 big picks, so the acceptance rate is a known binomial mass.
    rng = np.random.default_rng(12)
    n = 10_000
    hits = sum(
        one_step_validity(rng.integers(0, HET.size, 8), HET, 4, 4)
        for _ in range(n)
    )
    p_big = HET.n_big / HET.size
    expect = math.comb(8, 4) * p_big ** 4 * (1 - p_big) ** 4
    sigma = math.sqrt(expect * (1 - expect) / n)
    assert abs(hits / n - expect) < 4 * sigma + 1e-3


# --- reflection ----------------------------------------------------------


def test_reflect_bounces_and_rounds():
    assert _reflect(11.4, 0, 11) == 11    # 2*11 - 11.4 = 10.6 -> 11
    assert _reflect(-0.6, 0, 11) == 1
    assert _reflect(25.0, 0, 11) == 3     # 22 - 25 = -3 -> 3
    assert _reflect(5.5, 0, 11) == 6      # half rounds up
    assert _reflect(3.0, 3, 3) == 3
    assert _reflect(7.2, 2, 5) == 3       # 10 - 7.2 = 2.8 -> 3


# --- DDS -----------------------------------------------------------------


def test_dds_identity_single_dimension():
    out = dds_search(DdsParams(workers=2, seed=1), lambda x: float(x[0]),
                     n_dims=1, n_confs=3)
    assert out.best == (2,)
    assert out.score == 2.0


def test_dds_eval_counts_and_log_structure():
    params = DdsParams(workers=8, seed=0)
    out = dds_search(params, lambda x: float(sum(x)), n_dims=3, n_confs=5)
    assert len(out.log) == 50 + 8 * 10 * 40
    initial = [r for r in out.log if r.iteration == 0]
    assert len(initial) == 50
    candidates = [r for r in out.log if r.iteration >= 1]
    assert len(candidates) == 8 * 10 * 40
    assert {r.worker for r in candidates} == set(range(8))
    assert max(r.iteration for r in out.log) == 40


def test_dds_best_is_max_of_everything_evaluated():
    obj = _quality_objective(5)
    out = dds_search(DdsParams(workers=3, seed=9), obj, n_dims=4, n_confs=12)
    assert out.score == pytest.approx(max(r.score for r in out.log), abs=0.0)
    assert obj(out.best) == pytest.approx(out.score, rel=1e-12)


def test_dds_deterministic_per_seed_and_workers():
    obj = _quality_objective(2)
    a = dds_search(DdsParams(workers=4, seed=11), obj, 4, 12)
    b = dds_search(DdsParams(workers=4, seed=11), obj, 4, 12)
    assert a.best == b.best and a.score == b.score
    assert [r.score for r in a.log] == [r.score for r in b.log]
    c = dds_search(DdsParams(workers=4, seed=12), obj, 4, 12)
    assert [r.score for r in a.log] != [r.score for r in c.log]


def test_dds_respects_bounds_and_fixed_dims():
    seen = []

    def spy(x):
        seen.append(tuple(x))
        return float(sum(x))

    out = dds_search(DdsParams(workers=2, seed=4, max_iter=10), spy,
                     n_dims=3, n_confs=10,
                     fixed_dims={1: 7}, bounds=[(2, 5), (0, 9), (2, 5)])
    for x in seen:
        assert 2 <= x[0] <= 5 and 2 <= x[2] <= 5
        assert x[1] == 7
    assert out.best[1] == 7
    assert out.best[0] == 5 and out.best[2] == 5


def test_dds_initial_sampler_feeds_first_points():
    calls = []

    def sampler(rng):
        calls.append(1)
        return [1, 1]

    def obj(x):
        return float(x[0] + x[1])

    out = dds_search(DdsParams(workers=1, seed=0, max_iter=2,
                               initial_random_points=5),
                     obj, 2, 4, initial_sampler=sampler)
    assert len(calls) == 5
    first = [r.score for r in out.log[:5]]
    assert first == [2.0] * 5


def test_dds_all_dims_fixed_rejected():
    with pytest.raises(ValueError):
        dds_search(DdsParams(), lambda x: 0.0, 2, 3, fixed_dims={0: 0, 1: 1})


def _quality_objective(seed):
    rng = np.random.default_rng(seed)
    table = rng.uniform(0.5, 1.5, size=(4, 12))

    def obj(x):
        vals = [table[d, int(x[d])] for d in range(4)]
        return float(np.exp(np.mean(np.log(vals))) + 0.05 * math.cos(2.5 * sum(x)))

    return obj


def test_dds_near_exhaustive_on_small_instance():
    obj = _quality_objective(21)
    best_x, best = brute_force(obj, 4, 12)
    good = 0
    for seed in range(30):
        out = dds_search(DdsParams(workers=4, seed=seed), obj, 4, 12)
        if out.score >= 0.95 * best:
            good += 1
    assert good >= 27


def test_dds_with_tables_objective_agrees_with_brute_force():
    tables = _tiny_tables(seed=19)
    budget = Budget(max_power=7.0, cache_ways=4.5)
    obj = ConstrainedObjective(tables, budget)
    bx, bs = brute_force(obj, 3, SMALL.size)
    out = dds_search(DdsParams(workers=2, seed=5), obj, 3, SMALL.size)
    assert out.score >= 0.97 * bs
    assert obj(out.best) == out.score


# --- GA ------------------------------------------------------------------


def test_ga_identity_single_dimension():
    best, score = ga_search(GaParams(seed=2), lambda x: float(x[0]), 1, 3)
    assert best == (2,)
    assert score == 2.0


def test_ga_eval_budget_is_population_times_generations():
    count = [0]

    def obj(x):
        count[0] += 1
        return float(sum(x))

    ga_search(GaParams(seed=0), obj, 3, 4)
    assert count[0] == 20 * 25
    count[0] = 0
    ga_search(GaParams(seed=0), obj, 3, 4, workers=2)
    assert count[0] == 2 * 20 * 25


def test_ga_deterministic_and_fixed_dims():
    obj = _quality_objective(8)
    a = ga_search(GaParams(seed=14), obj, 4, 12)
    b = ga_search(GaParams(seed=14), obj, 4, 12)
    assert a == b
    best, _ = ga_search(GaParams(seed=3), lambda x: float(sum(x)), 3, 6,
                        fixed_dims={2: 1})
    assert best[2] == 1
    assert best[0] == 5 and best[1] == 5


# --- exhaustive scan ------------------------------------------------------


def test_brute_force_exact_and_lexicographic_ties():
    def bowl(x):
        return -((x[0] - 1) ** 2) - (x[1] - 2) ** 2

    assert brute_force(bowl, 2, 4) == ((1, 2), 0.0)
    best, score = brute_force(lambda x: 1.0, 3, 5)
    assert best == (0, 0, 0) and score == 1.0
    best, _ = brute_force(lambda x: 1.0, 3, 5, fixed_dims={1: 3})
    assert best == (0, 3, 0)


def test_brute_force_guard_refuses_huge_spaces():
    with pytest.raises(SpaceTooLarge):
        brute_force(lambda x: 0.0, 9, 10)


def test_brute_force_respects_bounds():
    best, score = brute_force(lambda x: float(sum(x)), 2, 10,
                              bounds=[(1, 3), (2, 4)])
    assert best == (3, 4) and score == 7.0


# --- log export -----------------------------------------------------------


def test_evals_to_csv_layout():
    rows = [EvalRecord(0, 0, 1.5, 10.0, 4.0, True),
            EvalRecord(3, 2, -0.25, 12.5, 6.0, False)]
    text = evals_to_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "iter,worker,score,power,cache,feasible"
    assert lines[1].startswith("0,0,1.5,10.0,4.0,1")
    assert lines[2].startswith("3,2,-0.25,12.5,6.0,0")
