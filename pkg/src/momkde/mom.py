"""Median-of-Means kernel density estimation.

The sample is split once, at fit time, into ``S`` disjoint random blocks.  At
a query point each block yields an ordinary KDE value (normalized by the
block's own size) and the estimate is the median of those ``S`` values.  No
weights are learned, so fitting costs only a random permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .datagen import as_points
from .density import (
    EvaluationGrid,
    _as_queries,
    kernel_matrix,
    normalize_density,
    query_chunks,
)
from .errors import ParameterError, ShapeError
from .kernels import KernelSpec

MEDIAN_RULES = ("mid", "lower")


@dataclass(frozen=True)
class BlockPartition:
    """Random split of ``range(n)`` into ``n_blocks`` near-equal blocks.

    ``assignments[i]`` is the zero-based block of sample ``i``.
    """

    assignments: np.ndarray
    n_blocks: int
    seed: int | None = None

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64).reshape(-1)
        if self.n_blocks < 1 or self.n_blocks > max(a.size, 1):
            raise ParameterError("need 1 <= n_blocks <= n")
        if a.size and (a.min() < 0 or a.max() >= self.n_blocks):
            raise ParameterError("block index out of range")
        sizes = np.bincount(a, minlength=self.n_blocks)
        if np.any(sizes == 0):
            raise ParameterError("every block must be non-empty")
        object.__setattr__(self, "assignments", a)

    @property
    def n(self) -> int:
        return self.assignments.size

    @property
    def block_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_blocks)

    def blocks(self) -> list:
        return [np.flatnonzero(self.assignments == s) for s in range(self.n_blocks)]


def partition_blocks(n: int, n_blocks: int, rng_seed=None) -> BlockPartition:
    """Random permutation of ``range(n)`` cut into ``n_blocks`` contiguous chunks.

    Sizes differ by at most one; the first ``n % n_blocks`` blocks are larger.
    """
    if int(n_blocks) != n_blocks or not 1 <= n_blocks <= n:
        raise ParameterError(f"number of blocks must satisfy 1 <= S <= n (S={n_blocks}, n={n})")
    perm = np.random.default_rng(rng_seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    for s, chunk in enumerate(np.array_split(perm, n_blocks)):
        assignments[chunk] = s
    return BlockPartition(assignments, int(n_blocks), rng_seed)


@dataclass(frozen=True)
class MomEstimate:
    points: np.ndarray
    partition: BlockPartition
    bandwidth: float
    kernel: KernelSpec
    normalization: float | None = None
    median_rule: str = "mid"

    def __post_init__(self):
        pts = as_points(self.points)
        if pts.shape[0] != self.partition.n:
            raise ShapeError("partition does not cover the data")
        if self.kernel.dimension != pts.shape[1]:
            raise ShapeError("kernel dimension does not match the data")
        if not self.bandwidth > 0:
            raise ParameterError("bandwidth must be positive")
        if self.normalization is not None and not (self.normalization > 0 and math.isfinite(self.normalization)):
            raise ParameterError("normalization constant must be positive and finite")
        if self.median_rule not in MEDIAN_RULES:
            raise ParameterError(f"median_rule must be one of {MEDIAN_RULES}")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.partition.n_blocks

    def __call__(self, queries):
        return mom_evaluate(self, queries)


def fit_mom(data, n_blocks: int, h: float, kernel: KernelSpec, rng_seed=None,
            median_rule: str = "mid") -> MomEstimate:
    pts = as_points(data)
    return MomEstimate(pts, partition_blocks(pts.shape[0], n_blocks, rng_seed), h, kernel,
                       median_rule=median_rule)


def _block_order(partition: BlockPartition):
    order = np.argsort(partition.assignments, kind="stable")
    sizes = partition.block_sizes
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return order, starts, sizes


def block_means(kmat: np.ndarray, partition: BlockPartition) -> np.ndarray:
    """Per-block averages of a precomputed ``(m, n)`` kernel matrix -> ``(m, S)``."""
    order, starts, sizes = _block_order(partition)
    return np.add.reduceat(kmat[:, order], starts, axis=1) / sizes


def median_of_blocks(values: np.ndarray, rule: str = "mid") -> np.ndarray:
    """Row-wise median of ``(m, S)`` block values.

    ``mid`` averages the two central order statistics when ``S`` is even,
    ``lower`` keeps the smaller one.
    """
    if rule == "mid":
        return np.median(values, axis=1)
    k = (values.shape[1] - 1) // 2
    return np.partition(values, k, axis=1)[:, k]


def block_values(estimate: MomEstimate, queries) -> np.ndarray:
    """``(m, S)`` array of block-wise KDE values at the queries."""
    q = _as_queries(queries, estimate.d)
    out = np.empty((q.shape[0], estimate.n_blocks))
    for sl in query_chunks(q.shape[0], estimate.n):
        kmat = kernel_matrix(estimate.points, q[sl], estimate.bandwidth, estimate.kernel)
        out[sl] = block_means(kmat, estimate.partition)
    return out


def mom_evaluate(estimate: MomEstimate, queries, raw: bool = False) -> np.ndarray:
    """MoM-KDE values at ``queries``; divided by the stored constant unless ``raw``."""
    values = median_of_blocks(block_values(estimate, queries), estimate.median_rule)
    if estimate.normalization is not None and not raw:
        values = values / estimate.normalization
    return values


def median_blocks(estimate: MomEstimate, queries) -> np.ndarray:
    """Index of the block attaining the median at each query (odd ``S`` or lower rule)."""
    vals = block_values(estimate, queries)
    med = median_of_blocks(vals, "lower" if estimate.n_blocks % 2 else estimate.median_rule)
    return np.argmin(np.abs(vals - med[:, None]), axis=1)


def mom_fit_normalized(data, n_blocks: int, h: float, kernel: KernelSpec, rng_seed,
                       grid: EvaluationGrid, median_rule: str = "mid") -> MomEstimate:
    """Fit MoM-KDE and store its integral over ``grid`` as the normalization."""
    if kernel.dimension > 3:
        raise ParameterError("quadrature normalization is restricted to d <= 3")
    est = fit_mom(data, n_blocks, h, kernel, rng_seed, median_rule)
    raw = mom_evaluate(est, grid.nodes())
    _, z = normalize_density(grid, raw)
    return replace(est, normalization=z)


def normalized_grid_values(estimate: MomEstimate, grid: EvaluationGrid) -> np.ndarray:
    raw = mom_evaluate(estimate, grid.nodes(), raw=True)
    return normalize_density(grid, raw)[0]


def mom_failure_probability(n_blocks: int, n_outliers: int, delta: float) -> float:
    """``exp(-2 D^2 S)`` with ``D = 1/(2 + delta) - |O|/S``.

    Requires ``S > (2 + delta) |O|``.
    """
    if n_blocks < 1 or n_outliers < 0 or not delta > 0:
        raise ParameterError("need S >= 1, n_outliers >= 0 and delta > 0")
    if not n_blocks > (2.0 + delta) * n_outliers:
        raise ParameterError(
            f"constraint S > (2 + delta)|O| violated: {n_blocks} <= {(2.0 + delta) * n_outliers}"
        )
    gap = 1.0 / (2.0 + delta) - n_outliers / n_blocks
    return math.exp(-2.0 * gap * gap * n_blocks)


def rate_optimal_bandwidth(n: float, n_blocks: int, alpha: float = 1.0, d: int = 1) -> float:
    """``(S log n / n) ** (1 / (2 alpha + d))``."""
    if not n >= 2:
        raise ParameterError("n must be at least 2")
    if n_blocks < 1 or not 0 < alpha <= 1 or d < 1:
        raise ParameterError("need S >= 1, alpha in (0, 1] and d >= 1")
    return (n_blocks * math.log(n) / n) ** (1.0 / (2.0 * alpha + d))
