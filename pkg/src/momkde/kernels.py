"""Radial smoothing kernels.

Every kernel is written ``K(u) = c_d * g(||u||)`` where ``g`` is a raw,
non-increasing profile on ``[0, inf)`` and ``c_d`` makes ``K`` integrate to
one over ``R^d``.  :func:`kernel_profile` returns ``c_d * g(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import ParameterError, ShapeError

FAMILIES = ("gaussian", "exponential", "uniform", "triangular", "cosine", "epanechnikov")
COMPACT_FAMILIES = frozenset({"uniform", "triangular", "cosine", "epanechnikov"})


def _raw_profile(family, t):
    t = np.asarray(t, dtype=float)
    if family == "gaussian":
        return np.exp(-0.5 * t * t)
    if family == "exponential":
        return np.exp(-t)
    inside = t <= 1.0
    if family == "uniform":
        return np.where(inside, 1.0, 0.0)
    if family == "triangular":
        return np.where(inside, 1.0 - t, 0.0)
    if family == "cosine":
        return np.where(inside, np.cos(0.5 * np.pi * np.minimum(t, 1.0)), 0.0)
    if family == "epanechnikov":
        return np.where(inside, 1.0 - t * t, 0.0)
    raise ParameterError(f"unknown kernel family {family!r}")


def _sphere_area(d):
    # surface area of the unit sphere S^{d-1}
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _ball_volume(d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@lru_cache(maxsize=None)
def _normalizer(family, d):
    if family == "gaussian":
        return (2.0 * math.pi) ** (-d / 2)
    if family == "uniform":
        return 1.0 / _ball_volume(d)
    if family == "epanechnikov":
        return (d + 2) / (2.0 * _ball_volume(d))
    upper = math.inf if family == "exponential" else 1.0
    radial, _ = integrate.quad(
        lambda t: float(_raw_profile(family, t)) * t ** (d - 1),
        0.0,
        upper,
        epsabs=0.0,
        epsrel=1e-10,
        limit=200,
    )
    return 1.0 / (_sphere_area(d) * radial)


@dataclass(frozen=True)
class KernelSpec:
    """A normalized radial kernel in dimension ``dimension``.

    Build instances with :func:`make_kernel`; passing ``normalizer`` by hand is
    only useful for checking the validator against a deliberately wrong
    constant.
    """

    family: str
    dimension: int
    normalizer: float
    norm: str = "euclidean"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ParameterError(f"kernel dimension must be a positive integer, got {self.dimension}")
        if not (self.normalizer > 0 and math.isfinite(self.normalizer)):
            raise ParameterError("kernel normalizer must be positive and finite")
        if self.norm != "euclidean":
            raise ParameterError("only the euclidean norm is supported")

    @property
    def compact(self) -> bool:
        return self.family in COMPACT_FAMILIES

    @property
    def support_radius(self) -> float:
        return 1.0 if self.compact else math.inf


def make_kernel(family: str = "gaussian", dimension: int = 1) -> KernelSpec:
    """Return the unit-mass kernel ``family`` in ``dimension`` dimensions."""
    family = family.lower()
    if family not in FAMILIES:
        raise ParameterError(f"unknown kernel family {family!r}; choose from {FAMILIES}")
    if int(dimension) != dimension or dimension < 1:
        raise ParameterError(f"kernel dimension must be a positive integer, got {dimension}")
    return KernelSpec(family, int(dimension), _normalizer(family, int(dimension)))


def kernel_profile(spec: KernelSpec, t):
    """Normalized profile ``k(t)`` so that ``K(u) = k(||u||)``.

    ``t`` may be a scalar or an array of non-negative radii.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ParameterError("kernel profile is defined for t >= 0 only")
    out = spec.normalizer * _raw_profile(spec.family, arr)
    return float(out) if out.ndim == 0 else out


def profile_from_sq(spec: KernelSpec, sq):
    """Profile evaluated at ``sqrt(sq)``; skips the root for the gaussian."""
    sq = np.asarray(sq, dtype=float)
    if spec.family == "gaussian":
        return spec.normalizer * np.exp(-0.5 * sq)
    return spec.normalizer * _raw_profile(spec.family, np.sqrt(sq))


def eval_kernel(spec: KernelSpec, u):
    """Evaluate ``K(u)``.

    ``u`` is a single d-vector or an ``(m, d)`` array of vectors.
    """
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != spec.dimension:
        raise ShapeError(f"expected vectors of length {spec.dimension}, got shape {arr.shape}")
    return kernel_profile(spec, np.sqrt(np.sum(arr * arr, axis=-1)))


@dataclass(frozen=True)
class KernelReport:
    nonnegative: bool
    integral: float
    monotone_profile: bool
    tolerance: float = 1e-3

    @property
    def ok(self) -> bool:
        return self.nonnegative and self.monotone_profile and abs(self.integral - 1.0) <= self.tolerance


def validate_kernel(spec: KernelSpec, grid, tolerance: float = 1e-3) -> KernelReport:
    """Numerically check non-negativity, unit mass and a monotone profile.

    The grid should reach at least radius 8 for non-compact families; for
    compact ones radius 1 suffices.  Failures are reported, never raised.
    """
    from .density import integrate_on_grid

    if grid.dimension != spec.dimension:
        raise ShapeError("grid dimension does not match kernel dimension")
    values = eval_kernel(spec, grid.nodes()).reshape(grid.shape)
    radius = float(np.max(np.maximum(np.abs(grid.lower), np.abs(grid.upper))))
    ts = np.linspace(0.0, radius, 10001)
    prof = kernel_profile(spec, ts)
    return KernelReport(
        nonnegative=bool(np.all(values >= 0)),
        integral=integrate_on_grid(grid, values),
        monotone_profile=bool(np.all(np.diff(prof) <= 0)),
        tolerance=tolerance,
    )
