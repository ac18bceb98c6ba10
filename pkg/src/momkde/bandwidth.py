"""Pseudo-likelihood k-fold cross-validation for the bandwidth."""

from __future__ import annotations

import math

import numpy as np

from .datagen import as_points
from .density import query_chunks, squared_distances
from .errors import ParameterError, SelectionError
from .kernels import KernelSpec, make_kernel, profile_from_sq

LOG_FLOOR = 1e-300


def default_bandwidth_grid(data, size: int = 20, low: float = 0.05, high: float = 5.0) -> np.ndarray:
    """``size`` log-spaced values over ``[low, high]`` times the data scale.

    The scale is the geometric mean of the per-axis standard deviations.
    """
    pts = as_points(data)
    std = pts.std(axis=0)
    std = std[std > 0]
    scale = float(np.exp(np.mean(np.log(std)))) if std.size else 1.0
    return np.geomspace(low * scale, high * scale, size)


def fold_assignments(n: int, k_folds: int, rng_seed=None) -> np.ndarray:
    perm = np.random.default_rng(rng_seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(perm, k_folds)):
        folds[chunk] = f
    return folds


def cv_log_likelihood(data, h_grid, kernel: KernelSpec, folds) -> np.ndarray:
    """Held-out log-likelihood of the uniform-weight KDE, one score per bandwidth."""
    pts = as_points(data)
    d = pts.shape[1]
    h_grid = np.asarray(h_grid, dtype=float)
    scores = np.zeros(h_grid.size)
    for f in np.unique(folds):
        train = pts[folds != f]
        held = pts[folds == f]
        for sl in query_chunks(held.shape[0], train.shape[0]):
            sq = squared_distances(held[sl], train)
            for j, h in enumerate(h_grid):
                dens = profile_from_sq(kernel, sq / (h * h)).mean(axis=1) / h ** d
                scores[j] += np.log(dens + LOG_FLOOR).sum()
    return scores


def select_bandwidth_cv(data, k_folds: int = 5, h_grid=None, kernel: KernelSpec | None = None,
                        rng_seed=None):
    """Pick the bandwidth maximizing the k-fold pseudo-likelihood.

    Returns ``(h, scores)``; ties go to the smaller bandwidth.
    """
    pts = as_points(data)
    n = pts.shape[0]
    if k_folds < 2 or n < k_folds:
        raise ParameterError(f"need 2 <= k_folds <= n (k={k_folds}, n={n})")
    h_grid = default_bandwidth_grid(pts) if h_grid is None else np.asarray(h_grid, dtype=float)
    if h_grid.size == 0 or np.any(h_grid <= 0):
        raise ParameterError("bandwidth grid must be non-empty and positive")
    if np.any(np.diff(h_grid) <= 0):
        raise ParameterError("bandwidth grid must be strictly ascending")
    kernel = kernel or make_kernel("gaussian", pts.shape[1])
    scores = cv_log_likelihood(pts, h_grid, kernel, fold_assignments(n, k_folds, rng_seed))
    finite = np.isfinite(scores)
    if not finite.any():
        raise SelectionError("no bandwidth in the grid gives a finite likelihood")
    best = int(np.argmax(np.where(finite, scores, -math.inf)))
    return float(h_grid[best]), scores
