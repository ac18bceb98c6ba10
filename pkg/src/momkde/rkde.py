"""Robust KDE by M-estimation of the kernel mean (Kim & Scott).

The KDE is the mean of the feature vectors ``phi(X_i) = k_h(., X_i)`` in the
RKHS of the smoothing kernel.  Replacing the squared loss by a robust
``rho`` and solving with iteratively reweighted least squares gives a new
weight per point; the estimate stays a weighted KDE.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .datagen import as_points
from .density import WeightedDensityEstimate, gaussian_gram
from .errors import DegenerateFitError, NumericError, ParameterError
from .kernels import KernelSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobustLoss:
    """Huber (knot ``a``) or Hampel (knots ``a < b < c``) loss on distances."""

    family: str
    a: float
    b: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.family not in ("huber", "hampel"):
            raise ParameterError(f"unknown loss {self.family!r}")
        if not self.a > 0:
            raise ParameterError("loss threshold a must be positive")
        if self.family == "hampel" and not (self.b is not None and self.c is not None and self.a < self.b < self.c):
            raise ParameterError(f"Hampel knots need a < b < c, got {self.a}, {self.b}, {self.c}")

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        a = self.a
        if self.family == "huber":
            return np.where(t <= a, 0.5 * t * t, a * t - 0.5 * a * a)
        b, c = self.b, self.c
        r_b = a * b - 0.5 * a * a
        tc = np.clip(t, b, c)
        mid = r_b + 0.5 * a * (c - b) * (1.0 - ((c - tc) / (c - b)) ** 2)
        return np.select(
            [t <= a, t <= b, t <= c],
            [0.5 * t * t, a * t - 0.5 * a * a, mid],
            default=r_b + 0.5 * a * (c - b),
        )

    def psi(self, t):
        t = np.asarray(t, dtype=float)
        a = self.a
        if self.family == "huber":
            return np.minimum(t, a)
        b, c = self.b, self.c
        return np.select(
            [t <= a, t <= b, t <= c],
            [t, np.full_like(t, a), a * (c - t) / (c - b)],
            default=0.0,
        )

    def weight(self, t):
        """``psi(t) / t`` with value 1 at the origin."""
        t = np.asarray(t, dtype=float)
        safe = np.where(t > 0, t, 1.0)
        return np.where(t > 0, self.psi(safe) / safe, 1.0)


def hampel_parameters_from_distances(distances) -> RobustLoss:
    """Hampel knots at the 50th, 75th and 95th percentiles of ``distances``."""
    dist = np.asarray(distances, dtype=float).reshape(-1)
    if dist.size < 3:
        raise ParameterError("need at least 3 distances to place the Hampel knots")
    a, b, c = np.percentile(dist, [50, 75, 95])
    if not a < b < c:
        raise ParameterError(f"distances too concentrated for Hampel knots ({a}, {b}, {c})")
    return RobustLoss("hampel", float(a), float(b), float(c))


def rkhs_gram(points, h: float, kernel: KernelSpec) -> np.ndarray:
    """``G_ij = <phi(X_i), phi(X_j)> = k_h(X_i, X_j)``."""
    if kernel.family != "gaussian":
        raise ParameterError("RKDE requires the gaussian kernel (positive definite Gram)")
    pts = as_points(points)
    return gaussian_gram(pts, h * h, kernel.normalizer / h ** pts.shape[1])


def rkhs_distances(gram, weights) -> np.ndarray:
    """``||phi(X_i) - sum_j w_j phi(X_j)||`` for every ``i``."""
    g = np.asarray(gram, dtype=float)
    w = np.asarray(weights, dtype=float)
    gw = g @ w
    sq = np.diag(g) - 2.0 * gw + w @ gw
    if sq.size and sq.min() < -1e-12 * max(1.0, float(np.abs(np.diag(g)).max())):
        raise NumericError(f"negative squared RKHS distance {sq.min():.3e}; Gram is not PSD")
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass(frozen=True)
class RkdeFit:
    weights: np.ndarray
    distances: np.ndarray
    objective_trace: tuple
    iterations: int
    converged: bool
    loss: RobustLoss

    def estimate(self, points, h, kernel) -> WeightedDensityEstimate:
        return WeightedDensityEstimate(points, self.weights, h, kernel)


def fit_rkde(data, h: float, kernel: KernelSpec, loss="hampel", tol: float = 1e-8,
             max_iter: int = 100, gram=None) -> RkdeFit:
    """IRLS for ``min_g sum_i rho(||phi(X_i) - g||)``.

    ``loss`` is a :class:`RobustLoss` or one of ``"hampel"`` / ``"huber"``; named
    losses are calibrated once on the distances at uniform weights (Hampel
    knots at the 50/75/95th percentiles, Huber knot at the median).
    """
    if not h > 0 or tol <= 0 or max_iter < 1:
        raise ParameterError("need h > 0, tol > 0 and max_iter >= 1")
    pts = as_points(data)
    n = pts.shape[0]
    g = rkhs_gram(pts, h, kernel) if gram is None else np.asarray(gram)

    w = np.full(n, 1.0 / n)
    dist = rkhs_distances(g, w)
    if isinstance(loss, str):
        if loss == "hampel":
            loss = hampel_parameters_from_distances(dist)
        elif loss == "huber":
            loss = RobustLoss("huber", float(np.median(dist)) or 1.0)
        else:
            raise ParameterError(f"unknown loss {loss!r}")
    obj = float(np.sum(loss.rho(dist)))
    trace = [obj]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        raw = loss.weight(dist)
        total = raw.sum()
        if not total > 0:
            raise DegenerateFitError("every point lies beyond the loss cut-off; all weights vanish")
        w_new = raw / total
        dist_new = rkhs_distances(g, w_new)
        obj_new = float(np.sum(loss.rho(dist_new)))
        if obj_new > obj:
            # a majorize-minimize step cannot increase the objective beyond roundoff
            if obj_new - obj <= 1e-10 * max(abs(obj), 1e-300):
                converged = True
                break
            log.warning("RKDE objective increased from %r to %r", obj, obj_new)
        change = abs(obj - obj_new) / max(abs(obj), 1e-300)
        w, dist, obj = w_new, dist_new, obj_new
        trace.append(obj)
        if change < tol:
            converged = True
            break
    return RkdeFit(w, dist, tuple(trace), it, converged, loss)


def rkde_estimate(data, h, kernel, **kwargs) -> WeightedDensityEstimate:
    pts = as_points(data)
    return fit_rkde(pts, h, kernel, **kwargs).estimate(pts, h, kernel)


def rkde_objective(gram, weights, loss: RobustLoss) -> float:
    return float(np.sum(loss.rho(rkhs_distances(gram, weights))))

