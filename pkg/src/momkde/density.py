"""Weighted kernel density estimates, evaluation grids and quadrature."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import as_points
from .errors import EmptyModelError, NormalizationError, NumericError, ParameterError, ShapeError
from .kernels import KernelSpec, profile_from_sq

log = logging.getLogger(__name__)

DEFAULT_GRID_CAP = 2 ** 22
# kernel-matrix entries materialized per chunk; fixed so reductions are reproducible
CHUNK_ENTRIES = 2 ** 20


def _as_queries(queries, d):
    q = np.asarray(queries, dtype=float)
    if q.ndim == 1:
        q = q.reshape(-1, 1) if d == 1 else q.reshape(1, -1)
    if q.ndim != 2 or (q.shape[0] and q.shape[1] != d):
        raise ShapeError(f"queries must have {d} columns, got shape {q.shape}")
    return q.reshape(-1, d)


def squared_distances(queries, points):
    """``(m, n)`` squared euclidean distances, summed coordinate by coordinate."""
    out = None
    for j in range(points.shape[1]):
        diff = np.subtract.outer(queries[:, j], points[:, j])
        diff *= diff
        if out is None:
            out = diff
        else:
            out += diff
    return out


GRAM_BLOCK_ENTRIES = 2 ** 15


def gaussian_gram(points, variance: float, scale: float) -> np.ndarray:
    """``scale * exp(-||X_i - X_j||^2 / (2 variance))`` for all pairs.

    Filled in row blocks small enough to stay in cache, so the ``n x n`` output
    is the only full-size array touched.
    """
    pts = as_points(points)
    n, d = pts.shape
    out = np.empty((n, n))
    step = max(1, GRAM_BLOCK_ENTRIES // max(n, 1))
    tmp = np.empty((step, n))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        blk = out[lo:hi]
        t = tmp[: hi - lo]
        for j in range(d):
            np.subtract.outer(pts[lo:hi, j], pts[:, j], out=t)
            t *= t
            if j == 0:
                blk[...] = t
            else:
                blk += t
        blk *= -0.5 / variance
        np.exp(blk, out=blk)
        blk *= scale
    return out


def kernel_matrix(points, queries, h: float, kernel: KernelSpec) -> np.ndarray:
    """Scaled kernel values ``K((X_i - x_j) / h) / h^d`` as an ``(m, n)`` array."""
    pts = as_points(points)
    q = _as_queries(queries, pts.shape[1])
    return profile_from_sq(kernel, squared_distances(q, pts) / (h * h)) / h ** pts.shape[1]


def query_chunks(m: int, n: int):
    step = max(1, CHUNK_ENTRIES // max(n, 1))
    for start in range(0, m, step):
        yield slice(start, min(m, start + step))


@dataclass(frozen=True)
class WeightedDensityEstimate:
    """A kernel density estimate with per-point weights on the simplex.

    Uniform weights give the ordinary Parzen-Rosenblatt estimator; the robust
    baselines differ only in the weights they learn.
    """

    points: np.ndarray
    weights: np.ndarray
    bandwidth: float
    kernel: KernelSpec

    def __post_init__(self):
        pts = as_points(self.points)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] == 0:
            raise EmptyModelError("density estimate has no points")
        if w.shape[0] != pts.shape[0]:
            raise ShapeError("weights and points differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ParameterError("weights must be non-negative and sum to 1")
        if not self.bandwidth > 0:
            raise ParameterError("bandwidth must be positive")
        if self.kernel.dimension != pts.shape[1]:
            raise ShapeError("kernel dimension does not match the data")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, bandwidth, kernel):
        pts = as_points(points)
        if pts.shape[0] == 0:
            raise EmptyModelError("density estimate has no points")
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), bandwidth, kernel)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __call__(self, queries):
        return kde_evaluate(self, queries)


def kde_evaluate(estimate: WeightedDensityEstimate, queries) -> np.ndarray:
    """``sum_i w_i K((X_i - x) / h) / h^d`` at every query row."""
    q = _as_queries(queries, estimate.d)
    out = np.empty(q.shape[0])
    for sl in query_chunks(q.shape[0], estimate.n):
        kmat = kernel_matrix(estimate.points, q[sl], estimate.bandwidth, estimate.kernel)
        out[sl] = np.sum(kmat * estimate.weights, axis=1)
    return out


@dataclass(frozen=True)
class EvaluationGrid:
    """Regular rectangular grid including both end points of every axis."""

    lower: np.ndarray
    upper: np.ndarray
    points_per_axis: tuple
    warnings: tuple = field(default=(), compare=False)
    cap: int = field(default=DEFAULT_GRID_CAP, compare=False)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        ppa = self.points_per_axis
        if np.ndim(ppa) == 0:
            ppa = (int(ppa),) * lo.size
        ppa = tuple(int(p) for p in ppa)
        if lo.shape != hi.shape or len(ppa) != lo.size:
            raise ShapeError("grid bounds and resolution disagree in dimension")
        if not np.all(lo < hi):
            raise ParameterError("grid needs lower < upper on every axis")
        if any(p < 2 for p in ppa):
            raise ParameterError("grid needs at least 2 points per axis")
        if math.prod(ppa) > self.cap:
            raise ParameterError(f"grid of {math.prod(ppa)} nodes exceeds cap {self.cap}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "points_per_axis", ppa)

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def shape(self) -> tuple:
        return self.points_per_axis

    @property
    def size(self) -> int:
        return math.prod(self.points_per_axis)

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / (np.asarray(self.points_per_axis) - 1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list:
        return [np.linspace(lo, hi, p) for lo, hi, p in zip(self.lower, self.upper, self.points_per_axis)]

    def nodes(self) -> np.ndarray:
        """All grid nodes as an ``(N, d)`` array in C order (last axis fastest)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def build_grid(data, padding_bandwidths: float, points_per_axis, h_ref: float = 1.0,
               cap: int = DEFAULT_GRID_CAP) -> EvaluationGrid:
    """Bounding box of ``data`` widened by ``padding_bandwidths * h_ref``.

    An axis on which all points coincide is first widened by one unit on each
    side; a warning is recorded on the grid.
    """
    pts = as_points(data)
    if pts.shape[0] == 0:
        raise EmptyModelError("cannot build a grid around an empty dataset")
    if padding_bandwidths < 0 or h_ref < 0:
        raise ParameterError("padding and reference bandwidth must be non-negative")
    lo = pts.min(axis=0).astype(float)
    hi = pts.max(axis=0).astype(float)
    notes = []
    for j in np.flatnonzero(lo == hi):
        lo[j] -= 1.0
        hi[j] += 1.0
        notes.append(f"axis {j} is degenerate; widened by +-1")
        log.warning("grid axis %d is degenerate; widened by +-1", j)
    if pts.shape[1] > 3:
        notes.append("quadrature is unreliable beyond 3 dimensions")
    pad = padding_bandwidths * h_ref
    return EvaluationGrid(lo - pad, hi + pad, points_per_axis, tuple(notes), cap)


def default_grid(data, h: float) -> EvaluationGrid:
    """Grid used for normalization and divergences: 5 bandwidths of padding."""
    d = as_points(data).shape[1]
    if d > 3:
        raise ParameterError("quadrature-based normalization is restricted to d <= 3")
    resolution = {1: 2001, 2: 301, 3: 61}[d]
    return build_grid(data, 5.0, resolution, h_ref=h)


def integrate_on_grid(grid: EvaluationGrid, values) -> float:
    """Trapezoidal rule over the grid box."""
    v = np.asarray(values, dtype=float)
    if v.size != grid.size:
        raise ShapeError(f"values have {v.size} entries, grid has {grid.size}")
    if np.isnan(v).any():
        raise NumericError("NaN in integrand")
    v = v.reshape(grid.shape)
    for dx in grid.spacing[::-1]:
        v = np.trapezoid(v, dx=dx, axis=-1)
    return float(v)


def normalize_density(grid: EvaluationGrid, values):
    """Return ``(values / Z, Z)`` with ``Z`` the grid integral of ``values``."""
    v = np.asarray(values, dtype=float)
    z = integrate_on_grid(grid, v)
    if not (math.isfinite(z) and z > 0):
        raise NormalizationError(f"cannot normalize: integral is {z}")
    return v / z, z


def write_grid_csv(grid: EvaluationGrid, values, path) -> None:
    """Dump ``x_1..x_d, value`` rows, one per grid node."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size != grid.size:
        raise ShapeError("values do not match the grid")
    write_points_csv(grid.nodes(), v, path)


def write_points_csv(points, values, path) -> None:
    pts = np.asarray(points, dtype=float)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{j + 1}" for j in range(pts.shape[1])] + ["value"])
        for row, val in zip(pts, values):
            writer.writerow([repr(float(x)) for x in row] + [repr(float(val))])
