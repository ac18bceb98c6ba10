"""Contamination sweeps: generate or subsample data, fit every method, score it.

A sweep is a pure function of its :class:`ExperimentConfig`.  Each
``(ratio, repetition)`` cell draws its randomness from a child seed derived
from ``(base_seed, ratio index, repetition)``, so cells can run in any order
or in parallel processes without changing the output.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bandwidth import select_bandwidth_cv
from .datagen import (
    Dataset,
    contaminated_sample,
    downsample_to_ratio,
    inlier_density,
    load_csv_dataset,
    resolve_scheme,
)
from .density import (
    WeightedDensityEstimate,
    default_grid,
    kde_evaluate,
    kernel_matrix,
    normalize_density,
)
from .errors import ConfigError, ParameterError
from .kernels import make_kernel
from .metrics import auc, js_divergence, kl_divergence
from .mom import block_means, fit_mom, median_of_blocks, mom_evaluate, partition_blocks
from .rkde import fit_rkde
from .spkde import fit_spkde

log = logging.getLogger(__name__)

METHODS = ("kde", "mom", "rkde", "spkde")
METRICS = ("kl_fwd", "kl_rev", "js", "auc")
DIVERGENCES = frozenset({"kl_fwd", "kl_rev", "js"})
DEFAULT_RATIOS = tuple(round(0.05 * i, 2) for i in range(1, 11))
ORACLE_GRID_SIZE = 20

RESULT_COLUMNS = ("dataset", "method", "ratio", "repetition", "metric", "value",
                  "seed", "h", "S", "n_iter", "error")
TIMING_COLUMNS = ("dataset", "method", "ratio", "repetition", "seed", "wall_time_ms", "n_iter")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a sweep.

    Exactly one of ``scheme`` (synthetic) and ``csv_path`` (real data) is set.
    ``bandwidth`` is ``"cv"`` or a fixed positive number; ``blocks`` is
    ``"oracle"`` (synthetic only), ``"outliers"`` (``2|O| + 1``) or a fixed
    integer.
    """

    scheme: str | None = None
    csv_path: str | None = None
    label_column: str | int | None = "label"
    outlier_label: float = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    ratios: list = field(default_factory=lambda: list(DEFAULT_RATIOS))
    repetitions: int | None = None
    n_inliers: int = 1000
    metrics: list | None = None
    base_seed: int = 0
    bandwidth: str | float = "cv"
    blocks: str | int | None = None
    kernel: str = "gaussian"
    cv_folds: int = 5
    rkde_loss: str = "hampel"
    name: str | None = None

    @property
    def synthetic(self) -> bool:
        return self.scheme is not None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw).resolved()

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with Path(path).open() as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved(self) -> "ExperimentConfig":
        """Validate and fill the source-dependent defaults."""
        if (self.scheme is None) == (self.csv_path is None):
            raise ConfigError("set exactly one of 'scheme' and 'csv_path'")
        cfg = dataclasses.replace(self, methods=list(self.methods), ratios=[float(r) for r in self.ratios])
        if cfg.synthetic:
            cfg.scheme = resolve_scheme(cfg.scheme)
        if cfg.repetitions is None:
            cfg.repetitions = 10 if cfg.synthetic else 50
        if cfg.metrics is None:
            cfg.metrics = list(METRICS) if cfg.synthetic else ["auc"]
        cfg.metrics = list(cfg.metrics)
        if cfg.blocks is None:
            cfg.blocks = "oracle" if cfg.synthetic else "outliers"
        if cfg.name is None:
            cfg.name = cfg.scheme if cfg.synthetic else Path(cfg.csv_path).stem

        if not cfg.methods or any(m not in METHODS for m in cfg.methods):
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}")
        if len(set(cfg.methods)) != len(cfg.methods):
            raise ConfigError("duplicate methods")
        if not cfg.metrics or any(m not in METRICS for m in cfg.metrics):
            raise ConfigError(f"metrics must be a non-empty subset of {METRICS}")
        if len(set(cfg.metrics)) != len(cfg.metrics):
            raise ConfigError("duplicate metrics")
        if not cfg.ratios or any(not 0.0 < r < 1.0 for r in cfg.ratios):
            raise ConfigError("ratios must lie in the open interval (0, 1)")
        if int(cfg.repetitions) != cfg.repetitions or cfg.repetitions < 1:
            raise ConfigError("repetitions must be a positive integer")
        if cfg.n_inliers < 2:
            raise ConfigError("n_inliers must be at least 2")
        if cfg.cv_folds < 2:
            raise ConfigError("cv_folds must be at least 2")
        if cfg.bandwidth != "cv":
            try:
                cfg.bandwidth = float(cfg.bandwidth)
            except (TypeError, ValueError):
                raise ConfigError("bandwidth must be 'cv' or a positive number") from None
            if not cfg.bandwidth > 0:
                raise ConfigError("bandwidth must be positive")
        if cfg.blocks not in ("oracle", "outliers"):
            if isinstance(cfg.blocks, bool) or int(cfg.blocks) != cfg.blocks or cfg.blocks < 1:
                raise ConfigError("blocks must be 'oracle', 'outliers' or a positive integer")
            cfg.blocks = int(cfg.blocks)
        if not cfg.synthetic and DIVERGENCES & set(cfg.metrics):
            raise ConfigError("divergence metrics need a known true density (synthetic data only)")
        if not cfg.synthetic and cfg.blocks == "oracle":
            raise ConfigError("oracle block selection needs a known true density (synthetic data only)")
        if ({"rkde", "spkde"} & set(cfg.methods)) and cfg.kernel != "gaussian":
            raise ConfigError("rkde and spkde require the gaussian kernel")
        if cfg.rkde_loss not in ("hampel", "huber"):
            raise ConfigError("rkde_loss must be 'hampel' or 'huber'")
        make_kernel(cfg.kernel, 1)
        return cfg


@dataclass
class ResultRow:
    dataset: str
    method: str
    ratio: float
    repetition: int
    metric: str
    value: float
    seed: int
    h: float
    S: int | None = None
    n_iter: int = 0
    error: str = ""
    wall_time_ms: float = 0.0


def child_seed(base_seed: int, ratio_index: int, repetition: int) -> int:
    """64-bit seed hashed from the sweep coordinates."""
    seq = np.random.SeedSequence([int(base_seed), int(ratio_index), int(repetition)])
    return int(seq.generate_state(1, np.uint64)[0])


def _sub_seeds(seed: int, count: int) -> list:
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def oracle_block_candidates(n_outliers: int, n: int | None = None) -> np.ndarray:
    """Up to 20 evenly spaced integers in ``[1, 2|O| + 1]``, deduplicated."""
    top = 2 * int(n_outliers) + 1
    if n is not None:
        top = min(top, int(n))
    if top < 1:
        raise ParameterError("oracle grid is empty")
    grid = np.floor(np.linspace(1, top, ORACLE_GRID_SIZE) + 0.5).astype(int)
    return np.unique(grid)


def oracle_block_scores(data, true_density, grid, h, kernel, n_outliers, rng_seed):
    """JS divergence of the normalized MoM-KDE for each candidate ``S``."""
    pts = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float).reshape(len(data), -1)
    candidates = oracle_block_candidates(n_outliers, pts.shape[0])
    kmat = kernel_matrix(pts, grid.nodes(), h, kernel)
    scores = []
    for s in candidates:
        part = partition_blocks(pts.shape[0], int(s), rng_seed)
        values = normalize_density(grid, median_of_blocks(block_means(kmat, part)))[0]
        scores.append(js_divergence(values, true_density, grid))
    return candidates, np.asarray(scores)


def oracle_select_blocks(data, true_density, grid, h, kernel, n_outliers, rng_seed) -> int:
    """Number of blocks minimizing the JS divergence to the true density (ties: smallest)."""
    candidates, scores = oracle_block_scores(data, true_density, grid, h, kernel, n_outliers, rng_seed)
    return int(candidates[int(np.argmin(scores))])


def _make_data(config: ExperimentConfig, ratio: float, seed: int, base: Dataset | None) -> Dataset:
    if config.synthetic:
        return contaminated_sample(config.scheme, config.n_inliers, ratio, seed)
    return downsample_to_ratio(base, ratio, seed)


def run_cell(config: ExperimentConfig, ratio_index: int, repetition: int, base: Dataset | None = None) -> list:
    """All rows for one ``(ratio, repetition)`` cell."""
    ratio = config.ratios[ratio_index]
    seed = child_seed(config.base_seed, ratio_index, repetition)
    s_data, s_cv, s_part = _sub_seeds(seed, 3)
    data = _make_data(config, ratio, s_data, base)
    kernel = make_kernel(config.kernel, data.d)
    labels = data.outlier_mask
    n_out = int(labels.sum())

    def row(method, metric, value, h, S=None, n_iter=0, error="", ms=0.0):
        return ResultRow(config.name, method, ratio, repetition, metric, value, seed, h, S, n_iter, error, ms)

    if config.bandwidth == "cv":
        h, _ = select_bandwidth_cv(data, config.cv_folds, kernel=kernel, rng_seed=s_cv)
    else:
        h = float(config.bandwidth)

    need_grid = bool(DIVERGENCES & set(config.metrics)) or config.blocks == "oracle"
    grid = truth = nodes = None
    if need_grid:
        grid = default_grid(data, h)
        nodes = grid.nodes()
        truth = normalize_density(grid, inlier_density(nodes))[0]

    rows = []
    for method in config.methods:
        S = None
        n_iter = 0
        try:
            if method == "mom":
                if config.blocks == "oracle":
                    S = oracle_select_blocks(data, truth, grid, h, kernel, n_out, s_part)
                elif config.blocks == "outliers":
                    S = min(2 * n_out + 1, data.n)
                else:
                    S = min(int(config.blocks), data.n)
            start = time.perf_counter()
            if method == "kde":
                est = WeightedDensityEstimate.uniform(data.points, h, kernel)
                ms = 0.0
            elif method == "mom":
                est = fit_mom(data, S, h, kernel, s_part)
                ms = 0.0
            elif method == "rkde":
                fit = fit_rkde(data, h, kernel, loss=config.rkde_loss)
                ms = 1e3 * (time.perf_counter() - start)
                est, n_iter = fit.estimate(data.points, h, kernel), fit.iterations
            else:
                fit = fit_spkde(data, h, kernel, contamination_eps=n_out / data.n)
                ms = 1e3 * (time.perf_counter() - start)
                est, n_iter = fit.estimate(data.points, h, kernel), fit.iterations
            evaluate = (lambda q: mom_evaluate(est, q)) if method == "mom" else (lambda q: kde_evaluate(est, q))
            values = {}
            if DIVERGENCES & set(config.metrics):
                fhat = normalize_density(grid, evaluate(nodes))[0]
                values["kl_fwd"] = lambda: kl_divergence(fhat, truth, grid)
                values["kl_rev"] = lambda: kl_divergence(truth, fhat, grid)
                values["js"] = lambda: js_divergence(fhat, truth, grid)
            values["auc"] = lambda: auc(evaluate(data.points), labels)
            for metric in config.metrics:
                try:
                    rows.append(row(method, metric, float(values[metric]()), h, S, n_iter, ms=ms))
                except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
                    rows.append(row(method, metric, math.nan, h, S, n_iter, f"{type(exc).__name__}: {exc}", ms))
        except Exception as exc:  # noqa: BLE001
            log.warning("%s failed at ratio %s rep %d: %s", method, ratio, repetition, exc)
            for metric in config.metrics:
                rows.append(row(method, metric, math.nan, h, S, n_iter, f"{type(exc).__name__}: {exc}"))
    return rows


def _run_cell_star(args):
    return run_cell(*args)


def _sort_key(config):
    m_order = {m: i for i, m in enumerate(METHODS)}
    k_order = {m: i for i, m in enumerate(METRICS)}
    r_order = {r: i for i, r in enumerate(config.ratios)}
    return lambda r: (r_order[r.ratio], r.repetition, m_order[r.method], k_order[r.metric])


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list:
    """Run the full sweep; ``workers > 1`` spreads cells over processes."""
    config = config.resolved()
    base = None
    if not config.synthetic:
        base = load_csv_dataset(config.csv_path, config.label_column, config.outlier_label)
        if not base.labeled:
            raise ConfigError("real-data sweeps need a label column")
    tasks = [(config, i, rep, base) for i in range(len(config.ratios)) for rep in range(config.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell_star, tasks))
    else:
        chunks = [run_cell(*t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=_sort_key(config))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def aggregate(rows) -> list:
    """Mean and sample std of finite-or-infinite values per (method, metric, ratio)."""
    groups = {}
    for r in rows:
        if r.error or math.isnan(r.value):
            continue
        groups.setdefault((r.dataset, r.method, r.metric, r.ratio), []).append(r.value)
    out = []
    for (dataset, method, metric, ratio), vals in groups.items():
        arr = np.asarray(vals, dtype=float)
        mean = float(arr.mean())
        if arr.size > 1 and np.all(np.isfinite(arr)):
            std = float(arr.std(ddof=1))
        elif arr.size == 1:
            std = 0.0
        else:
            std = math.nan
        out.append({"dataset": dataset, "method": method, "metric": metric, "ratio": ratio,
                    "mean": mean, "std": std, "count": int(arr.size)})
    m_order = {m: i for i, m in enumerate(METHODS)}
    k_order = {m: i for i, m in enumerate(METRICS)}
    out.sort(key=lambda a: (a["dataset"], m_order[a["method"]], k_order[a["metric"]], a["ratio"]))
    return out


def sidecar_paths(path) -> dict:
    path = Path(path)
    stem = path.with_suffix("")
    return {
        "results": path,
        "aggregates": Path(f"{stem}_aggregates.csv"),
        "timings": Path(f"{stem}_timings.csv"),
        "config": Path(f"{stem}_config.json"),
    }


def emit_results(rows, path, config: ExperimentConfig | None = None) -> dict:
    """Write results, aggregates, timings and the resolved config.

    Wall-clock timings live in their own file so that the results and
    aggregates files are byte-for-byte reproducible.
    """
    if not rows:
        raise ParameterError("no rows to emit")
    paths = sidecar_paths(path)
    paths["results"].parent.mkdir(parents=True, exist_ok=True)
    with paths["results"].open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])
    with paths["aggregates"].open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        cols = ("dataset", "method", "metric", "ratio", "mean", "std", "count")
        writer.writerow(cols)
        for a in aggregate(rows):
            writer.writerow([_fmt(a[c]) for c in cols])
    with paths["timings"].open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TIMING_COLUMNS)
        seen = set()
        for r in rows:
            key = (r.method, r.ratio, r.repetition)
            if key in seen:
                continue
            seen.add(key)
            writer.writerow([_fmt(getattr(r, c)) for c in TIMING_COLUMNS])
    if config is not None:
        with paths["config"].open("w") as fh:
            json.dump(config.resolved().to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        paths.pop("config")
    return paths
