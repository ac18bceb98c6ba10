"""Command line interface: ``momkde {synth,bandwidth,fit,eval,bench}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .bandwidth import default_bandwidth_grid, select_bandwidth_cv
from .datagen import (
    Dataset,
    load_csv_dataset,
    outlier_count,
    sample_inliers,
    sample_outliers,
    write_csv_dataset,
)
from .density import WeightedDensityEstimate, default_grid, write_grid_csv, write_points_csv
from .errors import MomKdeError, ParameterError
from .harness import ExperimentConfig, emit_results, run_experiment
from .kernels import FAMILIES, make_kernel
from .models import evaluate_model, load_model, save_model
from .mom import fit_mom, mom_fit_normalized
from .rkde import fit_rkde
from .spkde import fit_spkde

log = logging.getLogger("momkde")


def _read_input(path, label_column):
    """``label_column='auto'`` uses a column named ``label`` when the header has one."""
    if label_column == "auto":
        with Path(path).open(newline="") as fh:
            first = next(csv.reader(fh), [])
        label_column = "label" if "label" in [c.strip() for c in first] else None
    elif label_column in ("", "none"):
        label_column = None
    return load_csv_dataset(path, label_column)


def cmd_synth(args):
    if args.n_outliers is not None:
        n_out = args.n_outliers
    else:
        n_out = outlier_count(args.n_inliers, args.ratio)
    seeds = np.random.SeedSequence(args.seed).spawn(2)
    inl = sample_inliers(args.n_inliers, int(seeds[0].generate_state(1, np.uint64)[0]))
    out = sample_outliers(args.scheme, n_out, int(seeds[1].generate_state(1, np.uint64)[0]))
    data = Dataset.concat(inl, out, name=args.scheme)
    write_csv_dataset(data, args.output)
    log.info("wrote %d inliers and %d outliers to %s", inl.n, out.n, args.output)


def cmd_bandwidth(args):
    data = _read_input(args.input, args.label_column)
    if args.grid_min is not None and args.grid_max is not None:
        grid = np.geomspace(args.grid_min, args.grid_max, args.grid_size)
    else:
        grid = default_bandwidth_grid(data, args.grid_size)
    h, scores = select_bandwidth_cv(data, args.folds, grid, make_kernel(args.kernel, data.d), args.seed)
    json.dump({"h": h, "grid": grid.tolist(), "scores": scores.tolist()}, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_fit(args):
    data = _read_input(args.input, args.label_column)
    kernel = make_kernel(args.kernel, data.d)
    h = args.bandwidth
    if h is None:
        h, _ = select_bandwidth_cv(data, args.folds, kernel=kernel, rng_seed=args.seed)
        log.info("cross-validated bandwidth h = %.6g", h)
    info = {"seed": args.seed}
    start = time.perf_counter()
    if args.method == "kde":
        est = WeightedDensityEstimate.uniform(data.points, h, kernel)
    elif args.method == "mom":
        if args.blocks is None:
            raise ParameterError("--blocks is required for the mom method")
        if args.normalize:
            est = mom_fit_normalized(data, args.blocks, h, kernel, args.seed, default_grid(data, h))
        else:
            est = fit_mom(data, args.blocks, h, kernel, args.seed)
    elif args.method == "rkde":
        fit = fit_rkde(data, h, kernel, loss=args.loss, tol=args.tol or 1e-8, max_iter=args.max_iter or 100)
        est = fit.estimate(data.points, h, kernel)
        info.update(iterations=fit.iterations, converged=fit.converged,
                    objective_trace=list(fit.objective_trace),
                    loss={"family": fit.loss.family, "a": fit.loss.a, "b": fit.loss.b, "c": fit.loss.c})
    else:
        eps = args.eps
        if eps is None:
            if not data.labeled:
                raise ParameterError("--eps is required for unlabeled data")
            eps = data.n_outliers / data.n
        fit = fit_spkde(data, h, kernel, eps, tol=args.tol or 1e-9, max_iter=args.max_iter or 2000)
        est = fit.estimate(data.points, h, kernel)
        info.update(iterations=fit.iterations, converged=fit.converged, beta=fit.beta,
                    objective_trace=list(fit.objective_trace))
    info["learning_time_ms"] = 1e3 * (time.perf_counter() - start)
    ref = str(Path(args.input).resolve()) if args.by_reference else None
    label = None
    if ref is not None and data.labeled:
        label = "label" if args.label_column == "auto" else args.label_column
    save_model(args.output, est, args.method, points_path=ref, label_column=label, fit_info=info)
    log.info("saved %s model to %s", args.method, args.output)


def cmd_eval(args):
    est = load_model(args.model)
    if args.grid:
        grid = default_grid(est.points, est.bandwidth)
        write_grid_csv(grid, evaluate_model(est, grid.nodes()), args.output)
        return
    if args.queries is None:
        raise ParameterError("give --queries or --grid")
    queries = _read_input(args.queries, args.label_column).points
    write_points_csv(queries, evaluate_model(est, queries), args.output)


def cmd_bench(args):
    config = ExperimentConfig.from_json(args.config)
    rows = run_experiment(config, workers=args.workers)
    paths = emit_results(rows, args.output, config)
    for kind, path in paths.items():
        log.info("%s: %s", kind, path)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momkde", description="Robust kernel density estimation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a contaminated 1-D dataset")
    s.add_argument("--scheme", required=True,
                   help="uniform | regular_gaussian | thin_gaussian | adversarial_thin_gaussian (or a-d)")
    s.add_argument("--n-inliers", type=int, default=1000)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--ratio", type=float, default=0.2)
    g.add_argument("--n-outliers", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_synth)

    def add_input(sp):
        sp.add_argument("--input", required=True)
        sp.add_argument("--label-column", default="auto",
                        help="column name or index; 'auto' picks a column named 'label', 'none' disables")

    b = sub.add_parser("bandwidth", help="k-fold pseudo-likelihood bandwidth selection")
    add_input(b)
    b.add_argument("--folds", type=int, default=5)
    b.add_argument("--grid-min", type=float)
    b.add_argument("--grid-max", type=float)
    b.add_argument("--grid-size", type=int, default=20)
    b.add_argument("--kernel", default="gaussian", choices=FAMILIES)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bandwidth)

    f = sub.add_parser("fit", help="fit an estimator and save it as JSON")
    add_input(f)
    f.add_argument("--method", required=True, choices=("kde", "mom", "rkde", "spkde"))
    f.add_argument("--bandwidth", type=float, help="omit to cross-validate")
    f.add_argument("--folds", type=int, default=5)
    f.add_argument("--blocks", type=int, help="number of blocks S (mom)")
    f.add_argument("--normalize", action="store_true", help="store the grid integral (mom, d <= 3)")
    f.add_argument("--kernel", default="gaussian", choices=FAMILIES)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--loss", default="hampel", choices=("hampel", "huber"))
    f.add_argument("--tol", type=float)
    f.add_argument("--max-iter", type=int)
    f.add_argument("--eps", type=float, help="contamination ratio for spkde (default: from labels)")
    f.add_argument("--by-reference", action="store_true", help="store the input path instead of the points")
    f.add_argument("--output", required=True)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score query points against a saved model")
    e.add_argument("--model", required=True)
    e.add_argument("--queries")
    e.add_argument("--label-column", default="auto")
    e.add_argument("--grid", action="store_true", help="evaluate on the default grid instead")
    e.add_argument("--output", required=True)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("bench", help="run a contamination sweep from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--output", required=True, help="results CSV; sidecar files are written next to it")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (MomKdeError, OSError) as exc:
        print(f"momkde: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
