"""Datasets: synthetic inlier/outlier generators and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import IngestionError, ParameterError, ProtocolError, SchemaError

# inlier mixture: 1/2 N(0, 0.5^2) + 1/2 N(6, 0.5^2)
INLIER_MEANS = (0.0, 6.0)
INLIER_STD = 0.5

SCHEMES = ("uniform", "regular_gaussian", "thin_gaussian", "adversarial_thin_gaussian")
SCHEME_ALIASES = {
    "a": "uniform",
    "b": "regular_gaussian",
    "c": "thin_gaussian",
    "d": "adversarial_thin_gaussian",
    "regular": "regular_gaussian",
    "thin": "thin_gaussian",
    "adversarial": "adversarial_thin_gaussian",
}
THIN_STD = 0.01


@dataclass
class Dataset:
    """Points with optional outlier labels.

    ``labels`` is a boolean array, ``True`` marking an outlier.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    name: str = "data"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise ParameterError(f"points must be an (n, d) array, got shape {pts.shape}")
        self.points = pts
        if self.labels is not None:
            lab = np.asarray(self.labels).astype(bool).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise ParameterError("labels and points differ in length")
            self.labels = lab

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    @property
    def outlier_mask(self) -> np.ndarray:
        if self.labels is None:
            raise ParameterError(f"dataset {self.name!r} carries no labels")
        return self.labels

    @property
    def n_outliers(self) -> int:
        return int(self.outlier_mask.sum())

    @property
    def n_inliers(self) -> int:
        return self.n - self.n_outliers

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.points[index], labels, self.name, self.seed, dict(self.meta))

    @staticmethod
    def concat(first: "Dataset", second: "Dataset", name: str | None = None) -> "Dataset":
        if first.d != second.d and first.n and second.n:
            raise ParameterError("cannot concatenate datasets of different dimension")
        d = first.d if first.n else second.d
        points = np.vstack([first.points.reshape(-1, d), second.points.reshape(-1, d)])
        labels = None
        if first.labels is not None and second.labels is not None:
            labels = np.concatenate([first.labels, second.labels])
        return Dataset(points, labels, name or first.name)


def as_points(data) -> np.ndarray:
    """Coerce a Dataset or array-like into an ``(n, d)`` float array."""
    if isinstance(data, Dataset):
        return data.points
    pts = np.asarray(data, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return pts


def resolve_scheme(scheme: str) -> str:
    key = scheme.lower().replace("-", "_").replace(" ", "_")
    key = SCHEME_ALIASES.get(key, key)
    if key not in SCHEMES:
        raise ParameterError(f"unknown outlier scheme {scheme!r}; choose from {SCHEMES}")
    return key


def sample_inliers(n: int, rng_seed=None) -> Dataset:
    """Draw ``n`` points from the balanced two-component normal mixture."""
    if n < 0:
        raise ParameterError("n must be non-negative")
    rng = np.random.default_rng(rng_seed)
    means = np.where(rng.random(n) < 0.5, INLIER_MEANS[0], INLIER_MEANS[1])
    x = means + INLIER_STD * rng.standard_normal(n)
    return Dataset(x.reshape(-1, 1), np.zeros(n, dtype=bool), "inliers", rng_seed)


def inlier_density(x) -> np.ndarray:
    """Exact pdf of the inlier mixture at the points ``x`` (d = 1)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return 0.5 * (
        stats.norm.pdf(x, INLIER_MEANS[0], INLIER_STD) + stats.norm.pdf(x, INLIER_MEANS[1], INLIER_STD)
    )


def sample_outliers(scheme: str, n: int, rng_seed=None) -> Dataset:
    """Draw ``n`` outliers from one of the four contamination schemes.

    ``uniform``: U[-3, 9].  ``regular_gaussian``: N(3, 0.5^2).
    ``thin_gaussian``: N(3, 0.01^2).  ``adversarial_thin_gaussian``:
    N(0, 0.01^2), sitting on the left inlier mode.
    """
    kind = resolve_scheme(scheme)
    if n < 0:
        raise ParameterError("n must be non-negative")
    rng = np.random.default_rng(rng_seed)
    lo, hi = INLIER_MEANS
    if kind == "uniform":
        x = rng.uniform(lo - 3.0, hi + 3.0, size=n)
    elif kind == "regular_gaussian":
        x = rng.normal(3.0, INLIER_STD, size=n)
    elif kind == "thin_gaussian":
        x = rng.normal(3.0, THIN_STD, size=n)
    else:
        x = rng.normal(0.0, THIN_STD, size=n)
    return Dataset(x.reshape(-1, 1), np.ones(n, dtype=bool), kind, rng_seed)


def outlier_count(n_inliers: int, ratio: float) -> int:
    """Number of outliers giving ``|O| / (n_inliers + |O|)`` closest to ``ratio``."""
    if not 0.0 <= ratio < 1.0:
        raise ParameterError("ratio must lie in [0, 1)")
    return int(math.floor(ratio * n_inliers / (1.0 - ratio) + 0.5))


def contaminated_sample(scheme: str, n_inliers: int, ratio: float, rng_seed=None) -> Dataset:
    """Inliers plus enough outliers from ``scheme`` to reach ``ratio``."""
    seq = np.random.SeedSequence(rng_seed)
    s_in, s_out = (int(s.generate_state(1, np.uint64)[0]) for s in seq.spawn(2))
    data = Dataset.concat(
        sample_inliers(n_inliers, s_in),
        sample_outliers(scheme, outlier_count(n_inliers, ratio), s_out),
        name=resolve_scheme(scheme),
    )
    data.seed = rng_seed
    return data


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv_dataset(path, label_column=None, outlier_label_value=0, name=None) -> Dataset:
    """Read a numeric CSV file.

    A header is assumed when the first row holds a non-numeric cell.
    ``label_column`` is a header name or a zero-based column index; rows whose
    label equals ``outlier_label_value`` become outliers.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise IngestionError(f"{path}: file is empty")
    header = None
    if not all(_is_number(cell) for cell in rows[0]):
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
    if not rows:
        raise IngestionError(f"{path}: no data rows")

    width = len(header) if header is not None else len(rows[0])
    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise SchemaError(f"{path}: label column {label_column!r} not found")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if not -width <= label_idx < width:
                raise SchemaError(f"{path}: label column index {label_idx} out of range")
            label_idx %= width

    values = np.empty((len(rows), width))
    first_line = 2 if header is not None else 1
    for i, row in enumerate(rows):
        if len(row) != width:
            raise IngestionError(f"{path}: row {i + first_line} has {len(row)} fields, expected {width}")
        try:
            values[i] = [float(cell) for cell in row]
        except ValueError as exc:
            raise IngestionError(f"{path}: row {i + first_line} is not numeric ({exc})") from None

    labels = None
    feature_cols = list(range(width))
    if label_idx is not None:
        labels = values[:, label_idx] == float(outlier_label_value)
        feature_cols.remove(label_idx)
    if not feature_cols:
        raise SchemaError(f"{path}: no feature columns")
    return Dataset(values[:, feature_cols], labels, name or path.stem)


def write_csv_dataset(data: Dataset, path, outlier_label_value=0, inlier_label_value=1) -> None:
    """Write features as ``x_1..x_d`` plus a ``label`` column when labeled."""
    path = Path(path)
    cols = [f"x_{j + 1}" for j in range(data.d)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols + (["label"] if data.labeled else []))
        for i in range(data.n):
            row = [repr(float(v)) for v in data.points[i]]
            if data.labeled:
                row.append(outlier_label_value if data.labels[i] else inlier_label_value)
            writer.writerow(row)


def downsample_to_ratio(data: Dataset, target_ratio: float, rng_seed=None) -> Dataset:
    """Randomly drop rows so that ``|O| / n`` matches ``target_ratio``.

    Outliers are removed first; when there are too few of them to reach the
    target, inliers are removed instead.  Row order is preserved.
    """
    if not 0.0 < target_ratio < 1.0:
        raise ParameterError("target_ratio must lie in (0, 1)")
    mask = data.outlier_mask
    out_idx = np.flatnonzero(mask)
    in_idx = np.flatnonzero(~mask)
    if out_idx.size == 0 or in_idx.size == 0:
        raise ProtocolError("downsampling needs both inliers and outliers")

    keep_out = int(math.floor(target_ratio * in_idx.size / (1.0 - target_ratio) + 0.5))
    keep_in = in_idx.size
    if keep_out > out_idx.size:
        keep_out = out_idx.size
        keep_in = int(math.floor(out_idx.size * (1.0 - target_ratio) / target_ratio + 0.5))
    if keep_out < 1 or keep_in < 1:
        raise ProtocolError(
            f"ratio {target_ratio} unreachable with {in_idx.size} inliers and {out_idx.size} outliers"
        )
    rng = np.random.default_rng(rng_seed)
    chosen = np.concatenate([
        rng.choice(in_idx, size=keep_in, replace=False),
        rng.choice(out_idx, size=keep_out, replace=False),
    ])
    result = data.subset(np.sort(chosen))
    result.seed = rng_seed
    return result
