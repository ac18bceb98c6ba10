"""Divergences between gridded densities and the detection AUC."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata

from .density import EvaluationGrid, integrate_on_grid
from .errors import MetricError

MASS_FLOOR = 1e-12
NORMALIZATION_TOL = 1e-2
# p-mass allowed where q is numerically zero before KL is declared infinite
SUPPORT_MASS_TOL = 1e-6


def _check_pair(p, q, grid, check):
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.shape != q.shape or p.size != grid.size:
        raise MetricError("densities must both match the grid")
    if np.any(p < 0) or np.any(q < 0):
        raise MetricError("densities must be non-negative")
    if check:
        for name, v in (("p", p), ("q", q)):
            mass = integrate_on_grid(grid, v)
            if abs(mass - 1.0) > NORMALIZATION_TOL:
                raise MetricError(f"{name} integrates to {mass:.6f}, not 1")
    return p, q


def _kl(p, q, grid, log):
    support = p > MASS_FLOOR
    stray = support & (q <= MASS_FLOOR)
    if stray.any() and integrate_on_grid(grid, np.where(stray, p, 0.0)) > SUPPORT_MASS_TOL:
        return math.inf
    integrand = np.zeros_like(p)
    integrand[support] = p[support] * log(p[support] / np.maximum(q[support], MASS_FLOOR))
    return integrate_on_grid(grid, integrand)


def kl_divergence(p, q, grid: EvaluationGrid, check_normalized: bool = True) -> float:
    """``int p log(p / q)`` (natural log).

    Nodes where ``p`` is below the mass floor are skipped and ``q`` is floored
    there too.  Returns ``inf`` when more than ``SUPPORT_MASS_TOL`` of the mass
    of ``p`` sits where ``q`` is numerically zero.
    """
    p, q = _check_pair(p, q, grid, check_normalized)
    return _kl(p, q, grid, np.log)


def js_divergence(p, q, grid: EvaluationGrid, check_normalized: bool = True) -> float:
    """Jensen-Shannon divergence in bits, bounded by 1.

    The mixture is at least half of each argument, so the value is always finite.
    """
    p, q = _check_pair(p, q, grid, check_normalized)
    m = 0.5 * (p + q)
    total = 0.0
    for v in (p, q):
        mask = v > 0
        integrand = np.zeros_like(v)
        integrand[mask] = v[mask] * np.log2(v[mask] / m[mask])
        total += integrate_on_grid(grid, integrand)
    return 0.5 * total


def auc(scores, labels) -> float:
    """Area under the ROC curve of the detector flagging low scores.

    ``labels`` are 1 for outliers.  Equals the probability that a random
    outlier scores below a random inlier, ties counting one half.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).astype(bool).reshape(-1)
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    n_out = int(y.sum())
    n_in = y.size - n_out
    if n_out == 0 or n_in == 0:
        raise MetricError("AUC needs both outliers and inliers")
    ranks = rankdata(s)
    u_in = ranks[~y].sum() - n_in * (n_in + 1) / 2.0
    return float(u_in / (n_in * n_out))
