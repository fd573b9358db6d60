"""Collaborative reconstruction of sparsely measured response matrices.

Apps-by-allocations matrices (throughput, tail latency, per-config power)
are completed by low-rank factorization fitted with per-entry stochastic
gradient descent. Offline-characterized training apps provide fully observed
rows; each active app contributes a couple of measured entries and gets its
whole row back. The update loop also runs lock-free across threads over a
shared factor pair, tolerating lost updates.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .sampling import Sample
from .workload import AppProfile, BATCH, LATENCY_CRITICAL


class SgdDivergence(RuntimeError):
    """Fit blew up; the message names the step size."""


@dataclass
class SgdParams:
    eta: float = 0.05
    lam: float = 0.005
    max_iter: int = 2000
    factors: int | None = None    # default min(16, n_cols)
    seed: int = 0

    def factor_count(self, n_cols: int) -> int:
        return self.factors if self.factors is not None else min(16, n_cols)


class RatingsMatrix:
    """Sparse apps-by-allocations ratings with an explicit observed mask."""

    def __init__(self, row_ids: Sequence[str], n_cols: int):
        self.row_ids = list(row_ids)
        self.values = np.zeros((len(self.row_ids), n_cols))
        self.observed = np.zeros((len(self.row_ids), n_cols), dtype=bool)
        self._row_index = {r: i for i, r in enumerate(self.row_ids)}

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def row(self, row_id: str) -> int:
        return self._row_index[row_id]

    def observe(self, row_id: str, col: int, value: float) -> None:
        i = self._row_index[row_id]
        self.values[i, col] = value
        self.observed[i, col] = True

    def observe_row(self, row_id: str, values: np.ndarray) -> None:
        i = self._row_index[row_id]
        self.values[i, :] = values
        self.observed[i, :] = True

    def observed_entries(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major (rows, cols) of the observed entries; the sweep order."""
        rows, cols = np.nonzero(self.observed)
        return rows.astype(np.int64), cols.astype(np.int64)


@dataclass
class FactorModel:
    """Low-rank completion model plus the scaling used during the fit."""

    app_factors: np.ndarray      # (rows, f)
    config_factors: np.ndarray   # (cols, f)
    rmse_history: list[float]
    offset: float                # min-max denormalization: pred*scale + offset
    scale: float
    params: SgdParams

    def predict(self) -> np.ndarray:
        return (self.app_factors @ self.config_factors.T) * self.scale + self.offset

    def diagnostics(self) -> dict:
        return {
            "rows": int(self.app_factors.shape[0]),
            "cols": int(self.config_factors.shape[0]),
            "factors": int(self.app_factors.shape[1]),
            "rmse_history": [float(r) for r in self.rmse_history],
        }


@njit(cache=True, nogil=True)
def _sgd_epochs(vals, rows, cols, app_f, cfg_f, eta, lam, max_iter, rmse_out):
    """Per-entry SGD sweeps in fixed order; factor updates read each other's
    pre-update values. Safe to run concurrently on shared factors (racy)."""
    n = rows.shape[0]
    f = app_f.shape[1]
    for epoch in range(max_iter):
        sq = 0.0
        for k in range(n):
            i = rows[k]
            j = cols[k]
            dot = 0.0
            for t in range(f):
                dot += app_f[i, t] * cfg_f[j, t]
            eps = vals[k] - dot
            sq += eps * eps
            for t in range(f):
                qi = app_f[i, t]
                pj = cfg_f[j, t]
                app_f[i, t] = qi + eta * (eps * pj - lam * qi)
                cfg_f[j, t] = pj + eta * (eps * qi - lam * pj)
        rmse_out[epoch] = math.sqrt(sq / n)


_warmed = False


def _warm_kernel() -> None:
    global _warmed
    if not _warmed:
        one = np.zeros(1, dtype=np.int64)
        _sgd_epochs(np.zeros(1), one, one, np.zeros((1, 1)), np.zeros((1, 1)),
                    0.0, 0.0, 1, np.zeros(1))
        _warmed = True


def _normalized_values(matrix: RatingsMatrix) -> tuple[np.ndarray, float, float]:
    obs = matrix.values[matrix.observed]
    lo = float(obs.min())
    hi = float(obs.max())
    scale = hi - lo
    if scale == 0.0:
        scale = 1.0
    return (matrix.values - lo) / scale, lo, scale


def _init_factors(params: SgdParams, shape: tuple[int, int],
                  f: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(params.seed)
    bound = 1.0 / math.sqrt(f)
    app_f = rng.uniform(0.0, bound, size=(shape[0], f))
    cfg_f = rng.uniform(0.0, bound, size=(shape[1], f))
    return app_f, cfg_f


def _check_rows_observed(matrix: RatingsMatrix) -> None:
    empty = ~matrix.observed.any(axis=1)
    if empty.any():
        bad = [matrix.row_ids[i] for i in np.nonzero(empty)[0]]
        raise ValueError(f"rows with no observations: {bad}")


def sgd_fit(matrix: RatingsMatrix, params: SgdParams | None = None) -> FactorModel:
    """Fit factors to the observed entries of a min-max normalized matrix."""
    params = params or SgdParams()
    _check_rows_observed(matrix)
    f = params.factor_count(matrix.shape[1])
    normed, lo, scale = _normalized_values(matrix)
    app_f, cfg_f = _init_factors(params, matrix.shape, f)
    rows, cols = matrix.observed_entries()
    vals = np.ascontiguousarray(normed[rows, cols])
    rmse = np.empty(params.max_iter)
    _sgd_epochs(vals, rows, cols, app_f, cfg_f, params.eta, params.lam,
                params.max_iter, rmse)
    if not np.isfinite(rmse).all() or not np.isfinite(app_f).all():
        raise SgdDivergence(f"SGD diverged with eta={params.eta}")
    return FactorModel(app_f, cfg_f, [float(r) for r in rmse], lo, scale, params)


def parallel_sgd_fit(matrix: RatingsMatrix, params: SgdParams | None = None,
                     workers: int = 1) -> FactorModel:
    """Lock-free parallel fit: workers sweep disjoint entry subsets against
    shared factors without mutual exclusion. workers=1 reproduces sgd_fit
    bit for bit; more workers trade exactness for wall time.
    """
    params = params or SgdParams()
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1:
        return sgd_fit(matrix, params)
    _check_rows_observed(matrix)
    _warm_kernel()
    f = params.factor_count(matrix.shape[1])
    normed, lo, scale = _normalized_values(matrix)
    app_f, cfg_f = _init_factors(params, matrix.shape, f)
    rows, cols = matrix.observed_entries()
    vals = normed[rows, cols]
    n = rows.shape[0]
    parts = []
    for w in range(workers):
        # Contiguous row-major blocks: workers mostly touch disjoint app rows,
        # so unsynchronized updates rarely collide.
        sel = slice(w * n // workers, (w + 1) * n // workers)
        if sel.start == sel.stop:
            continue
        parts.append((np.ascontiguousarray(vals[sel]),
                      np.ascontiguousarray(rows[sel]),
                      np.ascontiguousarray(cols[sel])))
    # Within an epoch, workers update the shared factors with no locking at
    # all (lost updates tolerated); an epoch barrier bounds how stale any
    # worker's view can get, keeping the racy result statistically close to
    # the serial sweep.
    rmse_outs = [np.empty(params.max_iter) for _ in range(len(parts))]
    barrier = threading.Barrier(len(parts))

    def drive(w: int, v: np.ndarray, r: np.ndarray, c: np.ndarray) -> None:
        out = rmse_outs[w]
        try:
            for epoch in range(params.max_iter):
                _sgd_epochs(v, r, c, app_f, cfg_f, params.eta, params.lam,
                            1, out[epoch:epoch + 1])
                barrier.wait()
        except BaseException:
            barrier.abort()
            raise

    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        futs = [pool.submit(drive, w, v, r, c)
                for w, (v, r, c) in enumerate(parts)]
        for fut in futs:
            fut.result()
    if not np.isfinite(app_f).all() or not np.isfinite(cfg_f).all():
        raise SgdDivergence(f"SGD diverged with eta={params.eta}")
    final = float(np.sqrt(np.mean(
        ((app_f @ cfg_f.T)[rows, cols] - vals) ** 2)))
    return FactorModel(app_f, cfg_f, [final], lo, scale, params)


def reconstruct(matrix: RatingsMatrix, model: FactorModel,
                clamp_nonneg: bool = True) -> np.ndarray:
    """Dense completion: predictions everywhere, observed values verbatim."""
    out = model.predict()
    out[matrix.observed] = matrix.values[matrix.observed]
    if clamp_nonneg:
        np.clip(out, 0.0, None, out=out)
    return out


# ---------------------------------------------------------------------------
# the three per-quantum reconstructions


@dataclass
class ReconstructionResult:
    throughput: dict[str, np.ndarray]   # batch app -> (size,)
    latency: dict[str, np.ndarray]      # LC app -> (size,) at the given load
    power: dict[str, np.ndarray]        # app -> (n_core_configs,)
    models: dict[str, FactorModel] = field(default_factory=dict)


def run_three_reconstructions(samples: Iterable[Sample],
                              training_db: Sequence[AppProfile],
                              space,
                              batch_ids: Sequence[str],
                              lc_ids: Sequence[str],
                              *,
                              load: float = 0.0,
                              params: SgdParams | None = None,
                              workers: int = 1) -> ReconstructionResult:
    """Complete throughput (batch jointly), latency (one LC app at a time),
    and power (all apps, per core config) from this quantum's samples.

    Training rows are fully observed from the offline database; latency
    training rows are evaluated at the current load. Later samples for the
    same (app, allocation) overwrite earlier ones.
    """
    params = params or SgdParams()
    samples = list(samples)
    size = space.size
    p = space.n_cache_options
    m = size // p
    train_batch = [t for t in training_db if t.kind == BATCH]
    train_lc = [t for t in training_db if t.kind == LATENCY_CRITICAL]

    by_app: dict[str, list[Sample]] = {}
    for s in samples:
        by_app.setdefault(s.app_id, []).append(s)

    result = ReconstructionResult({}, {}, {})

    def fit_throughput():
        ids = [t.app_id for t in train_batch] + list(batch_ids)
        mat = RatingsMatrix(ids, size)
        for t in train_batch:
            mat.observe_row(t.app_id, t.bips)
        for app in batch_ids:
            for s in by_app.get(app, []):
                mat.observe(app, s.config_index, s.bips)
        model = parallel_sgd_fit(mat, params, workers)
        dense = reconstruct(mat, model)
        for app in batch_ids:
            result.throughput[app] = dense[mat.row(app)]
        result.models["throughput"] = model

    def fit_latency(app: str, k: int):
        ids = [t.app_id for t in train_lc] + [app]
        mat = RatingsMatrix(ids, size)
        for t in train_lc:
            grid = np.array([t.latency_at(i, load) for i in range(size)])
            mat.observe_row(t.app_id, grid)
        for s in by_app.get(app, []):
            if s.latency_ms is not None:
                mat.observe(app, s.config_index, s.latency_ms)
        model = parallel_sgd_fit(mat, replace(params, seed=params.seed + 2 + k), workers)
        dense = reconstruct(mat, model)
        result.latency[app] = dense[mat.row(app)]
        result.models[f"latency:{app}"] = model

    def fit_power():
        ids = [t.app_id for t in training_db] + [a for a in (*batch_ids, *lc_ids)]
        mat = RatingsMatrix(ids, m)
        for t in training_db:
            mat.observe_row(t.app_id, t.power)
        for app in (*batch_ids, *lc_ids):
            for s in by_app.get(app, []):
                mat.observe(app, s.config_index // p, s.watts)
        model = parallel_sgd_fit(mat, replace(params, seed=params.seed + 1), workers)
        dense = reconstruct(mat, model)
        for app in (*batch_ids, *lc_ids):
            result.power[app] = dense[mat.row(app)]
        result.models["power"] = model

    # Independent fits; simulated wall-clock is charged as the max of the
    # three by the runtime, host execution order does not matter.
    fit_throughput()
    for k, app in enumerate(lc_ids):
        fit_latency(app, k)
    fit_power()
    return result
