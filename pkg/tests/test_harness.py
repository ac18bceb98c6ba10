import csv
import json
import math

import pytest

from momkde.bandwidth import select_bandwidth_cv
from momkde.datagen import contaminated_sample, inlier_density, write_csv_dataset
from momkde.density import default_grid, normalize_density
from momkde.errors import ConfigError
from momkde.harness import (
    ExperimentConfig,
    ResultRow,
    aggregate,
    child_seed,
    emit_results,
    oracle_block_candidates,
    oracle_block_scores,
    oracle_select_blocks,
    run_experiment,
)
from momkde.kernels import make_kernel


def small(**kw):
    base = dict(scheme="d", methods=["kde", "mom"], ratios=[0.2], repetitions=3, n_inliers=150)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


class TestConfig:
    def test_defaults_synthetic(self):
        cfg = ExperimentConfig(scheme="a").resolved()
        assert cfg.repetitions == 10 and cfg.blocks == "oracle"
        assert cfg.metrics == ["kl_fwd", "kl_rev", "js", "auc"]
        assert cfg.ratios == [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]

    def test_defaults_csv(self):
        cfg = ExperimentConfig(csv_path="x/data.csv").resolved()
        assert cfg.repetitions == 50 and cfg.metrics == ["auc"] and cfg.blocks == "outliers"
        assert cfg.name == "data"

    @pytest.mark.parametrize("bad", [
        dict(ratios=[0.0]),
        dict(ratios=[1.0]),
        dict(methods=[]),
        dict(methods=["kde", "knn"]),
        dict(metrics=["mse"]),
        dict(repetitions=0),
        dict(bandwidth="silverman"),
        dict(bandwidth=-1.0),
        dict(blocks=0),
        dict(kernel="uniform", methods=["rkde"]),
        dict(scheme=None),
        dict(csv_path="a.csv"),
    ])
    def test_rejects(self, bad):
        raw = dict(scheme="a")
        raw.update(bad)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_csv_rejects_divergences_and_oracle(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(dict(csv_path="a.csv", metrics=["js"]))
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(dict(csv_path="a.csv", blocks="oracle"))

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(dict(scheme="a", seeds=3))

    def test_json_roundtrip(self, tmp_path):
        cfg = small()
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.from_json(path) == cfg


class TestSeeds:
    def test_no_collisions(self):
        seeds = {child_seed(0, i, r) for i in range(10) for r in range(50)}
        assert len(seeds) == 500

    def test_base_seed_matters(self):
        assert child_seed(0, 1, 2) != child_seed(1, 1, 2)


class TestOracle:
    def test_candidates(self):
        assert oracle_block_candidates(0).tolist() == [1]
        grid = oracle_block_candidates(200)
        assert grid[0] == 1 and grid[-1] == 401 and grid.size == 20
        assert oracle_block_candidates(3).tolist() == [1, 2, 3, 4, 5, 6, 7]
        assert oracle_block_candidates(600, n=700)[-1] == 700

    def _setup(self, h=None, seed=0):
        data = contaminated_sample("c", 800, 0.2, seed)
        k = make_kernel("gaussian", 1)
        if h is None:
            h, _ = select_bandwidth_cv(data, rng_seed=seed)
        grid = default_grid(data, h)
        truth = normalize_density(grid, inlier_density(grid.nodes()))[0]
        return data, truth, grid, h, k

    def test_never_worse_than_single_block(self):
        data, truth, grid, h, k = self._setup()
        cands, scores = oracle_block_scores(data, truth, grid, h, k, data.n_outliers, 1)
        best = oracle_select_blocks(data, truth, grid, h, k, data.n_outliers, 1)
        assert data.n_outliers == 200
        assert scores[list(cands).index(best)] <= scores[0]

    def test_many_blocks_chosen_at_wider_bandwidth(self):
        data, truth, grid, h, k = self._setup(h=0.5)
        cands, scores = oracle_block_scores(data, truth, grid, h, k, data.n_outliers, 1)
        best = oracle_select_blocks(data, truth, grid, h, k, data.n_outliers, 1)
        assert best > 1
        assert scores[list(cands).index(best)] <= scores[0]

    def test_deterministic(self):
        data, truth, grid, h, k = self._setup(h=0.4, seed=2)
        a = oracle_block_scores(data, truth, grid, h, k, data.n_outliers, 5)[1]
        b = oracle_block_scores(data, truth, grid, h, k, data.n_outliers, 5)[1]
        assert a.tobytes() == b.tobytes()


class TestSweep:
    def test_counting_contract(self):
        rows = run_experiment(small(repetitions=10, metrics=["js", "auc"]))
        for method in ("kde", "mom"):
            for metric in ("js", "auc"):
                assert sum(r.method == method and r.metric == metric for r in rows) == 10
        assert not any(r.error for r in rows)

    def test_mom_never_worse_than_kde_under_oracle(self):
        rows = run_experiment(small(metrics=["js"]))
        js = {(r.method, r.repetition): r.value for r in rows}
        for rep in range(3):
            assert js[("mom", rep)] <= js[("kde", rep)] + 1e-12

    def test_shared_bandwidth(self):
        rows = run_experiment(small(methods=["kde", "mom", "rkde", "spkde"], metrics=["auc"], repetitions=2))
        for rep in range(2):
            assert len({r.h for r in rows if r.repetition == rep}) == 1

    def test_timing_fields(self):
        rows = run_experiment(small(methods=["kde", "mom", "rkde", "spkde"], metrics=["auc"], repetitions=2))
        for r in rows:
            if r.method in ("kde", "mom"):
                assert r.wall_time_ms == 0.0 and r.n_iter == 0
            else:
                assert r.wall_time_ms > 0.0 and r.n_iter >= 1

    def test_fixed_bandwidth_and_blocks(self):
        rows = run_experiment(small(bandwidth=0.4, blocks=7, metrics=["auc"]))
        assert {r.h for r in rows} == {0.4}
        assert {r.S for r in rows if r.method == "mom"} == {7}

    def test_csv_sweep(self, tmp_path):
        path = tmp_path / "real.csv"
        write_csv_dataset(contaminated_sample("a", 300, 0.3, 0), path)
        cfg = ExperimentConfig.from_dict(dict(csv_path=str(path), ratios=[0.05, 0.1], repetitions=3))
        rows = run_experiment(cfg)
        assert len(rows) == 2 * 3 * 4
        assert all(r.metric == "auc" and 0.0 <= r.value <= 1.0 for r in rows)
        mom = [r for r in rows if r.method == "mom"]
        assert all(r.S % 2 == 1 for r in mom)

    def test_unlabeled_csv_rejected(self, tmp_path):
        path = tmp_path / "u.csv"
        path.write_text("x\n1\n2\n3\n")
        with pytest.raises(ConfigError):
            run_experiment(ExperimentConfig.from_dict(dict(csv_path=str(path), label_column=None)))


def read(path):
    return path.read_bytes()


class TestEmit:
    def test_line_count(self, tmp_path):
        rows = [ResultRow("x", "kde", 0.1, i, "auc", 0.5, 1, 0.2) for i in range(10)]
        paths = emit_results(rows, tmp_path / "r.csv")
        assert len(paths["results"].read_text().splitlines()) == 11

    def test_aggregate_mean_std(self):
        rows = [ResultRow("x", "kde", 0.1, i, "auc", float(v), 1, 0.2) for i, v in enumerate([1, 2, 3])]
        (agg,) = aggregate(rows)
        assert agg["mean"] == 2.0 and agg["std"] == 1.0 and agg["count"] == 3

    def test_inf_literal(self, tmp_path):
        rows = [ResultRow("x", "kde", 0.1, 0, "kl_fwd", math.inf, 1, 0.2)]
        paths = emit_results(rows, tmp_path / "r.csv")
        (row,) = list(csv.DictReader(paths["results"].open()))
        assert row["value"] == "inf"

    def test_error_rows_skipped_in_aggregate(self):
        rows = [
            ResultRow("x", "kde", 0.1, 0, "auc", 0.7, 1, 0.2),
            ResultRow("x", "kde", 0.1, 1, "auc", math.nan, 1, 0.2, error="boom"),
        ]
        (agg,) = aggregate(rows)
        assert agg["count"] == 1 and agg["mean"] == 0.7

    def test_sidecars(self, tmp_path):
        rows = run_experiment(small(metrics=["auc"], repetitions=1))
        paths = emit_results(rows, tmp_path / "out" / "r.csv", small())
        assert set(paths) == {"results", "aggregates", "timings", "config"}
        assert all(p.exists() for p in paths.values())
        assert json.loads(paths["config"].read_text())["scheme"] == "adversarial_thin_gaussian"
        assert "wall_time_ms" not in paths["results"].read_text().splitlines()[0]


class TestDeterminism:
    def test_byte_identical_runs(self, tmp_path):
        cfg = small(methods=["kde", "mom", "rkde", "spkde"], metrics=["js", "auc"], repetitions=2)
        a = emit_results(run_experiment(cfg), tmp_path / "a.csv", cfg)
        b = emit_results(run_experiment(cfg), tmp_path / "b.csv", cfg)
        c = emit_results(run_experiment(cfg, workers=2), tmp_path / "c.csv", cfg)
        for kind in ("results", "aggregates", "config"):
            assert read(a[kind]) == read(b[kind]) == read(c[kind])
