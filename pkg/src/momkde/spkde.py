"""Scaled and projected KDE (Vandermeulen & Scott).

The empirical KDE is scaled by ``beta >= 1`` and projected in L2 onto the
convex hull of the kernel bumps ``k_h(., X_i)``.  With ``G`` the L2 Gram
matrix of the bumps the projection is the simplex-constrained quadratic
program

    minimize  Q(w) = w'Gw - 2 (beta / n) 1'Gw   over the probability simplex,

which is solved here by accelerated projected gradient with a fixed step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .datagen import as_points
from .density import WeightedDensityEstimate, gaussian_gram
from .errors import NumericError, ParameterError
from .kernels import KernelSpec

log = logging.getLogger(__name__)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` (sort and threshold)."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise ParameterError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite entry in vector to project")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ks > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def l2_gram(points, h: float, kernel: KernelSpec) -> np.ndarray:
    """``G_ij = integral k_h(x, X_i) k_h(x, X_j) dx``.

    For gaussian bumps this is a gaussian of bandwidth ``h * sqrt(2)``
    evaluated at ``X_i - X_j``.
    """
    if kernel.family != "gaussian":
        raise ParameterError("SPKDE requires the gaussian kernel (closed-form L2 Gram)")
    pts = as_points(points)
    d = pts.shape[1]
    return gaussian_gram(pts, 2.0 * h * h, (4.0 * math.pi * h * h) ** (-d / 2))


def largest_eigenvalue(matrix, rtol: float = 1e-6, max_iter: int = 10_000) -> float:
    """Power iteration for the top eigenvalue of a symmetric PSD matrix."""
    a = np.asarray(matrix, dtype=float)
    x = np.full(a.shape[0], 1.0 / math.sqrt(a.shape[0]))
    lam = 0.0
    for _ in range(max_iter):
        y = a @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        lam_new = float(x @ y)
        x = y / norm
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


def spkde_objective(gram, weights, beta: float) -> float:
    g = np.asarray(gram)
    w = np.asarray(weights, dtype=float)
    n = w.size
    gw = g @ w
    return float(w @ gw - 2.0 * beta / n * gw.sum())


@dataclass(frozen=True)
class SpkdeFit:
    weights: np.ndarray
    beta: float
    objective_trace: tuple
    iterations: int
    converged: bool
    step: float

    def estimate(self, points, h, kernel) -> WeightedDensityEstimate:
        return WeightedDensityEstimate(points, self.weights, h, kernel)


def beta_from_contamination(eps: float) -> float:
    if not 0.0 <= eps < 1.0:
        raise ParameterError(f"contamination ratio must lie in [0, 1), got {eps}")
    return 1.0 / (1.0 - eps)


def fit_spkde(data, h: float, kernel: KernelSpec, contamination_eps: float = 0.0,
              tol: float = 1e-9, max_iter: int = 2000, gram=None) -> SpkdeFit:
    """Accelerated projected gradient on the SPKDE quadratic program.

    Starts from uniform weights and uses the fixed step ``1 / L`` with
    ``L = 2 lambda_max(G)``, the Lipschitz constant of the gradient.
    Nesterov momentum is restarted whenever an extrapolated step would
    raise the objective, so the recorded objective never increases.  The
    run stops when a plain (non-extrapolated) step changes the objective by
    less than ``tol`` relative, or after ``max_iter`` steps.
    """
    beta = beta_from_contamination(contamination_eps)
    if not h > 0 or tol <= 0 or max_iter < 1:
        raise ParameterError("need h > 0, tol > 0 and max_iter >= 1")
    pts = as_points(data)
    n = pts.shape[0]
    g = l2_gram(pts, h, kernel) if gram is None else np.asarray(gram)
    lipschitz = 2.0 * largest_eigenvalue(g)
    if not (lipschitz > 0 and math.isfinite(lipschitz)):
        raise NumericError("Gram matrix has no positive eigenvalue")
    step = 1.0 / lipschitz
    linear = 2.0 * beta / n * g.sum(axis=1)

    w = np.full(n, 1.0 / n)
    gw = g @ w
    obj = float(w @ gw - linear @ w)
    y, gy, t = w, gw, 1.0
    momentum = False
    trace = [obj]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        extrapolated = momentum
        z = project_simplex(y - step * (2.0 * gy - linear))
        gz = g @ z
        # Q(z) - Q(w) in factored form: accurate even when both are equal to
        # machine precision, which keeps restarts and the trace honest
        delta = float((z - w) @ (gz + gw - linear))
        if delta > 0.0:
            if momentum:
                y, gy, t, momentum = w, gw, 1.0, False
                continue
            # a plain 1/L projected step can only go uphill through roundoff
            if delta <= 1e-10 * max(abs(obj), 1e-300):
                converged = True
                break
            log.warning("SPKDE objective increased by %r", delta)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        coef = (t - 1.0) / t_next
        y = z + coef * (z - w)
        gy = gz + coef * (gz - gw)
        w, gw, t = z, gz, t_next
        obj = obj + delta
        momentum = True
        trace.append(obj)
        if abs(delta) < tol * max(abs(obj), 1e-300):
            if not extrapolated:
                converged = True
                break
            # a stalled extrapolated step proves nothing; retry without momentum
            y, gy, t, momentum = w, gw, 1.0, False
    return SpkdeFit(w, beta, tuple(trace), it, converged, step)


def projected_gradient_residual(gram, fit: SpkdeFit) -> float:
    """``||w - P(w - grad Q(w) / L)||``, zero exactly at the optimum."""
    g = np.asarray(gram)
    w = fit.weights
    n = w.size
    grad = 2.0 * (g @ w) - 2.0 * fit.beta / n * g.sum(axis=1)
    return float(np.linalg.norm(w - project_simplex(w - fit.step * grad)))
