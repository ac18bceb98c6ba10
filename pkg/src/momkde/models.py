"""JSON dumps of fitted estimators."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .datagen import load_csv_dataset
from .density import WeightedDensityEstimate, kde_evaluate
from .errors import SchemaError
from .kernels import make_kernel
from .mom import BlockPartition, MomEstimate, mom_evaluate

FORMAT = "momkde-model/1"


def model_to_dict(estimate, method: str, points_path: str | None = None,
                  label_column=None, fit_info: dict | None = None) -> dict:
    """Serializable description of a fitted estimate.

    With ``points_path`` the data are stored by reference instead of inline.
    """
    out = {
        "format": FORMAT,
        "method": method,
        "kernel": estimate.kernel.family,
        "dimension": estimate.kernel.dimension,
        "bandwidth": float(estimate.bandwidth),
    }
    if points_path is None:
        out["points"] = estimate.points.tolist()
    else:
        out["points_path"] = str(points_path)
        out["label_column"] = label_column
    if isinstance(estimate, MomEstimate):
        out["partition"] = {
            "assignments": estimate.partition.assignments.tolist(),
            "n_blocks": estimate.partition.n_blocks,
            "seed": estimate.partition.seed,
        }
        out["normalization"] = estimate.normalization
        out["median_rule"] = estimate.median_rule
    else:
        out["weights"] = estimate.weights.tolist()
    if fit_info:
        out["fit"] = fit_info
    return out


def model_from_dict(raw: dict, base_dir=None):
    if raw.get("format") != FORMAT:
        raise SchemaError(f"unsupported model format {raw.get('format')!r}")
    kernel = make_kernel(raw["kernel"], raw["dimension"])
    if "points" in raw:
        points = np.asarray(raw["points"], dtype=float).reshape(-1, raw["dimension"])
    elif "points_path" in raw:
        path = Path(raw["points_path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        points = load_csv_dataset(path, raw.get("label_column")).points
    else:
        raise SchemaError("model has neither 'points' nor 'points_path'")
    h = float(raw["bandwidth"])
    if "partition" in raw:
        part = raw["partition"]
        partition = BlockPartition(np.asarray(part["assignments"]), int(part["n_blocks"]), part.get("seed"))
        return MomEstimate(points, partition, h, kernel, raw.get("normalization"), raw.get("median_rule", "mid"))
    if "weights" not in raw:
        raise SchemaError("model has neither 'weights' nor 'partition'")
    return WeightedDensityEstimate(points, np.asarray(raw["weights"], dtype=float), h, kernel)


def save_model(path, estimate, method: str, **kwargs) -> None:
    with Path(path).open("w") as fh:
        json.dump(model_to_dict(estimate, method, **kwargs), fh)
        fh.write("\n")


def load_model(path):
    path = Path(path)
    with path.open() as fh:
        return model_from_dict(json.load(fh), base_dir=path.parent)


def evaluate_model(estimate, queries) -> np.ndarray:
    if isinstance(estimate, MomEstimate):
        return mom_evaluate(estimate, queries)
    return kde_evaluate(estimate, queries)
