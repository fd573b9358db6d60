"""Interpolating radial-basis-function surface over core configurations.

Fits a cubic-kernel RBF with a linear polynomial tail to a small designed
sample (nine runs) and predicts the rest of the width grid. Inputs are
level-coded per section ({0,1,2}), not raw widths, so distances treat the
three sections isotropically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RbfFitError(ValueError):
    """The augmented interpolation system is singular or ill-posed."""


def _as_points(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise RbfFitError(f"expected (n, 3) level-coded points, got {pts.shape}")
    return pts


def _cubic(r: np.ndarray) -> np.ndarray:
    return r * r * r


@dataclass(frozen=True)
class RbfModel:
    """Cubic RBF interpolant with a linear tail over level-coded triples."""

    centers: np.ndarray      # (n, 3)
    weights: np.ndarray      # (n,)
    poly_coeffs: np.ndarray  # (4,) constant + one slope per section

    def predict(self, points) -> np.ndarray:
        pts = _as_points(points)
        dists = np.linalg.norm(pts[:, None, :] - self.centers[None, :, :], axis=2)
        vals = _cubic(dists) @ self.weights
        vals += self.poly_coeffs[0] + pts @ self.poly_coeffs[1:]
        return vals if np.asarray(points).ndim > 1 else float(vals[0])

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "poly_coeffs": self.poly_coeffs.tolist(),
            "kernel": "cubic",
        }


def fit_rbf(points, values) -> RbfModel:
    """Interpolate (point, value) samples exactly.

    Solves the augmented system [Phi P; P^T 0][w; c] = [y; 0], which pins the
    orthogonality side conditions sum(w) = 0 and sum(w * x) = 0 and makes any
    affine function of the levels reproduce exactly.
    """
    pts = _as_points(points)
    y = np.asarray(values, dtype=float)
    n = pts.shape[0]
    if y.shape != (n,):
        raise RbfFitError(f"{n} points but {y.shape} values")
    if n < 4:
        raise RbfFitError("need at least 4 points for the linear tail")
    dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    phi = _cubic(dists)
    tail = np.hstack([np.ones((n, 1)), pts])
    if np.linalg.matrix_rank(tail) < 4:
        raise RbfFitError("sample points are collinear; linear tail is not unisolvent")
    a = np.zeros((n + 4, n + 4))
    a[:n, :n] = phi
    a[:n, n:] = tail
    a[n:, :n] = tail.T
    b = np.concatenate([y, np.zeros(4)])
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise RbfFitError(f"singular interpolation system: {exc}") from exc
    if not np.isfinite(sol).all():
        raise RbfFitError("non-finite solution; degenerate sample points")
    return RbfModel(centers=pts.copy(), weights=sol[:n], poly_coeffs=sol[n:])
