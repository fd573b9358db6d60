"""RBF surface: exact interpolation, affine reproduction, designed hold-out."""

import numpy as np
import pytest

from reconfsched.config_space import ConfigSpace
from reconfsched.sampling import three_mm3_design
from reconfsched.surrogate import RbfFitError, fit_rbf
from reconfsched.workload import generate_synthetic

DESIGN = three_mm3_design()
CENTERS = np.array(DESIGN.coded, dtype=float)


def _all_coded(space):
    levels = sorted(space.levels)
    return np.array(
        [[levels.index(c.fe_width), levels.index(c.be_width), levels.index(c.ls_width)]
         for c in space.core_configs], dtype=float)


def test_interpolates_all_centers():
    rng = np.random.default_rng(0)
    y = rng.uniform(1.0, 3.0, 9)
    model = fit_rbf(CENTERS, y)
    rel = np.abs(model.predict(CENTERS) - y) / y
    assert rel.max() <= 1e-9


def test_orthogonality_side_conditions():
    rng = np.random.default_rng(1)
    y = rng.uniform(1.0, 3.0, 9)
    model = fit_rbf(CENTERS, y)
    assert abs(model.weights.sum()) <= 1e-9
    assert np.abs(model.weights @ model.centers).max() <= 1e-9


def test_constant_data_gives_constant_poly():
    model = fit_rbf(CENTERS, np.full(9, 5.0))
    assert np.abs(model.weights).max() <= 1e-9
    assert model.poly_coeffs[0] == pytest.approx(5.0, abs=1e-9)
    assert np.abs(model.poly_coeffs[1:]).max() <= 1e-9


def test_affine_function_reproduced_everywhere():
    slope = np.array([1.0, -0.7, 0.25])
    y = 2.0 + CENTERS @ slope
    model = fit_rbf(CENTERS, y)
    grid = _all_coded(ConfigSpace())
    expect = 2.0 + grid @ slope
    assert np.abs(model.predict(grid) - expect).max() <= 1e-9


def test_symmetric_data_predicts_symmetric_points():
    # Values depend only on the distance from the design midpoint, and the
    # design is closed under x -> 2 - x, so mirrored off-design points must
    # predict identically.
    y = 1.0 + ((CENTERS - 1.0) ** 2).sum(axis=1)
    model = fit_rbf(CENTERS, y)
    a = model.predict(np.array([0.0, 1.0, 0.0]))
    b = model.predict(np.array([2.0, 1.0, 2.0]))
    assert a == pytest.approx(b, abs=1e-9)


def test_full_grid_fit_reproduces_data():
    grid = _all_coded(ConfigSpace())
    y = np.arange(27.0) + 1.0
    model = fit_rbf(grid, y)
    assert np.abs(model.predict(grid) - y).max() <= 1e-9


def test_duplicate_points_rejected():
    pts = np.array([[0, 0, 0], [0, 0, 0], [1, 1, 1], [2, 2, 2]], float)
    with pytest.raises(RbfFitError):
        fit_rbf(pts, np.arange(4.0))


def test_collinear_points_rejected():
    pts = np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2], [0.5, 0.5, 0.5]], float)
    with pytest.raises(RbfFitError):
        fit_rbf(pts, np.arange(4.0))


def test_too_few_points_rejected():
    with pytest.raises(RbfFitError):
        fit_rbf(np.zeros((3, 3)), np.zeros(3))


def test_designed_holdout_on_synthetic_surfaces():
    # Fit 9 designed runs of a smooth throughput surface at a fixed cache
    # allocation; the other 18 width configs must come back close.
    space = ConfigSpace()
    grid = _all_coded(space)
    run_rows = [space.core_configs.index(r) for r in DESIGN.runs]
    worst_median = 0.0
    for seed in range(4):
        for app in generate_synthetic(seed, 6, space):
            vals = np.array([app.bips[space.index_of(c, 1)]
                             for c in space.core_configs])
            model = fit_rbf(grid[run_rows], vals[run_rows])
            held = np.ones(27, bool)
            held[run_rows] = False
            rel = np.abs(model.predict(grid)[held] - vals[held]) / vals[held]
            worst_median = max(worst_median, float(np.median(rel)))
    assert worst_median < 0.08


def test_diagnostic_dump_round_trips():
    rng = np.random.default_rng(2)
    y = rng.uniform(1.0, 2.0, 9)
    model = fit_rbf(CENTERS, y)
    d = model.to_dict()
    assert d["kernel"] == "cubic"
    assert np.asarray(d["centers"]).shape == (9, 3)
    assert len(d["weights"]) == 9 and len(d["poly_coeffs"]) == 4
