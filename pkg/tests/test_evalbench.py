"""Metrics, ensemble orchestration, sweeps, and report persistence.

Ensemble runs here use a micro benchmark (tiny dataset, few epochs): they
exercise the machinery, not the science.
"""

import json

import numpy as np
import pytest

from cdmkit.errors import ConfigError, ShapeError
from cdmkit.evalbench import (
    RunReport,
    SplitSpec,
    physics_rmse,
    pooled_std,
    rmse,
    run_ensemble,
    run_method_matrix,
    split_seed,
    sweep,
    write_curves,
    write_report,
)
from cdmkit.netcore import NetWidths
from cdmkit.physics import (
    default_benchmark,
    default_conserved_totals,
    generate_benchmark_dataset,
    project_batch,
    solve_steady_state,
)
from cdmkit.training import TrainConfig

TINY = NetWidths(encoder_y=10, encoder_x=8, noise=6, embed=8, decoder_hidden=10)


@pytest.fixture(scope="module")
def micro_dataset():
    ds, _ = generate_benchmark_dataset(160, seed=21)
    return ds


@pytest.fixture(scope="module")
def constraint_set():
    _, cs, _ = default_benchmark()
    return cs


def _micro_config(**overrides):
    base = dict(min_epochs=8, max_epochs=8, patience=3, batch_size=32,
                widths=TINY, val_probes=4)
    base.update(overrides)
    return TrainConfig(**base)


class TestMetrics:
    def test_rmse_zero_at_equality(self):
        a = np.random.default_rng(0).standard_normal((5, 3))
        assert rmse(a, a) == 0.0

    def test_rmse_constant_offset(self):
        a = np.zeros((4, 2))
        assert rmse(a + 0.37, a) == pytest.approx(0.37, rel=1e-12)

    def test_rmse_example(self):
        assert rmse(np.array([[1.0, 1.0]]), np.array([[0.0, 0.0]])) == 1.0

    def test_rmse_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rmse(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_physics_rmse_on_ground_truth(self, constraint_set):
        net, cs, box = default_benchmark()
        rng = np.random.default_rng(1)
        xs = np.stack([box.draw(rng) for _ in range(10)])
        ys = np.stack(
            [solve_steady_state(net, x, default_conserved_totals) for x in xs]
        )
        cs_scaled = cs.with_scale_from_data(ys)
        assert physics_rmse(cs_scaled, xs, ys) <= 1e-8

    def test_projection_zeroes_physics_rmse(self, constraint_set):
        net, cs, box = default_benchmark()
        rng = np.random.default_rng(2)
        xs = np.stack([box.draw(rng) for _ in range(6)])
        y_noisy = np.stack(
            [solve_steady_state(net, x, default_conserved_totals) for x in xs]
        ) + 0.05 * rng.standard_normal((6, 5))
        cs_scaled = cs.with_scale_from_data(y_noisy)
        projected = project_batch(cs_scaled, xs, y_noisy)
        assert physics_rmse(cs_scaled, xs, projected) <= 1e-8

    def test_pooled_std(self):
        a = [1.0, 2.0, 3.0]
        b = [2.0, 4.0, 6.0]
        expected = np.sqrt(0.5 * (np.var(a, ddof=1) + np.var(b, ddof=1)))
        assert pooled_std(a, b) == pytest.approx(expected, rel=1e-12)


class TestSplitSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            SplitSpec(n_splits=0)
        with pytest.raises(ConfigError):
            SplitSpec(fractions=(0.5, 0.2, 0.2))

    def test_split_seed_stable(self):
        assert split_seed(3, 1, 2) == split_seed(3, 1, 2)
        assert split_seed(3, 1, 2) != split_seed(3, 2, 2)


class TestRunEnsemble:
    def test_single_split_flagged_degenerate(self, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=1, master_seed=5)
        rep = run_ensemble("nn", micro_dataset, spec, constraint_set, _micro_config())
        assert rep.degenerate
        assert rep.aggregates["test_rmse"]["std"] == 0.0
        assert len(rep.per_split) == 1

    def test_aggregates_recomputable(self, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=3, master_seed=6)
        rep = run_ensemble("cdm-0-const", micro_dataset, spec, constraint_set,
                           _micro_config(variant="cdm-0"))
        assert rep.aggregates == rep.recompute_aggregates()
        vals = [s["test_rmse"] for s in rep.per_split]
        assert rep.aggregates["test_rmse"]["mean"] == pytest.approx(np.mean(vals))
        assert rep.aggregates["test_rmse"]["std"] == pytest.approx(np.std(vals, ddof=1))

    def test_matrix_shares_backbones(self, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=2, master_seed=7)
        reports = run_method_matrix(
            ["cdm-0-const", "cdm-0-adapt", "nn", "nn+projection"],
            micro_dataset, spec, constraint_set, _micro_config(variant="cdm-0"),
        )
        assert set(reports) == {"cdm-0-const", "cdm-0-adapt", "nn", "nn+projection"}
        for rep in reports.values():
            assert len(rep.per_split) == 2
            assert not rep.partial
        # projection leaves physics residuals at numerical zero
        for entry in reports["nn+projection"].per_split:
            assert entry["physics_rmse"] <= 1e-8
        # fixed-point methods record sampler bookkeeping
        assert reports["cdm-0-const"].per_split[0]["evals_mean"] is not None
        assert reports["nn"].per_split[0]["evals_mean"] is None

    def test_unknown_method_rejected(self, micro_dataset, constraint_set):
        with pytest.raises(ConfigError):
            run_ensemble("boosted-trees", micro_dataset, SplitSpec(n_splits=1),
                         constraint_set, _micro_config())

    def test_report_round_trip(self, tmp_path, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=2, master_seed=8)
        reports = run_method_matrix(["nn"], micro_dataset, spec, constraint_set,
                                    _micro_config())
        path = write_report(reports, tmp_path)
        loaded = {
            m: RunReport.from_jsonable(doc)
            for m, doc in json.loads(path.read_text()).items()
        }
        assert loaded["nn"].aggregates == reports["nn"].aggregates
        assert loaded["nn"].per_split == reports["nn"].per_split
        assert loaded["nn"].recompute_aggregates() == reports["nn"].aggregates


class TestSweep:
    def test_sigma_max_grid(self, tmp_path, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=1, master_seed=9)
        results = sweep(
            "sigma_max", [0.4, 1.0], ["cdm-0-const"], micro_dataset, spec,
            constraint_set, _micro_config(variant="cdm-0"),
        )
        assert len(results) == 2
        assert results[0]["cdm-0-const"].sweep_coords == {"sigma_max": 0.4}
        path = write_curves(results, "sigma_max", tmp_path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "sigma_max,method,test_rmse_mean,test_rmse_std"
        assert len(lines) == 3

    def test_schedule_resolution_grid_is_inference_only(self, micro_dataset,
                                                        constraint_set):
        spec = SplitSpec(n_splits=1, master_seed=10)
        results = sweep(
            "schedule_T", [2, 5], ["cdm-t-dense"], micro_dataset, spec,
            constraint_set, _micro_config(variant="cdm-t"),
        )
        evals = [r["cdm-t-dense"].per_split[0]["evals_mean"] for r in results]
        assert evals == [2.0, 5.0]  # K=1 per level

    def test_refinement_grid(self, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=1, master_seed=11)
        results = sweep(
            "refine_K", [2, 4], ["cdm-t-dense"], micro_dataset, spec,
            constraint_set, _micro_config(variant="cdm-t"),
        )
        evals = [r["cdm-t-dense"].per_split[0]["evals_mean"] for r in results]
        assert evals == [6.0, 12.0]  # T=3 levels times K

    def test_param_count_grid_scales_widths(self, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=1, master_seed=12)
        results = sweep(
            "param_count", [0.5, 1.0], ["cdm-0-const"], micro_dataset, spec,
            constraint_set, _micro_config(variant="cdm-0"),
        )
        counts = [r["cdm-0-const"].sweep_coords["param_count"] for r in results]
        assert counts[0] < counts[1]

    def test_data_fraction_subsamples_train_only(self, micro_dataset,
                                                 constraint_set):
        spec = SplitSpec(n_splits=1, master_seed=13)
        results = sweep(
            "data_fraction", [0.5, 1.0], ["nn"], micro_dataset, spec,
            constraint_set, _micro_config(),
        )
        assert len(results) == 2

    def test_convergence_profile_records_trace(self, micro_dataset, constraint_set):
        spec = SplitSpec(n_splits=1, master_seed=14)
        results = sweep(
            "convergence_profile", [], ["cdm-0-const", "cdm-0-adapt"],
            micro_dataset, spec, constraint_set, _micro_config(variant="cdm-0"),
        )
        entry = results[0]["cdm-0-const"].per_split[0]
        trace = entry["mean_residual_trace"]
        assert len(trace) >= 1
        assert all(np.isfinite(trace))

    def test_unknown_kind_rejected(self, micro_dataset, constraint_set):
        with pytest.raises(ConfigError):
            sweep("learning_rate", [1], ["nn"], micro_dataset,
                  SplitSpec(n_splits=1), constraint_set, _micro_config())
