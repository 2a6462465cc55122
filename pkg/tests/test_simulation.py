"""Synthetic generation, misspecification, and the benchmark runner."""
import math

import numpy as np
import pytest

from irtm.model import Hyperparameters, validate_identification
from irtm.sampling import RngStream, normal_cdf
from irtm.simulation import (
    BenchmarkRow,
    SimDesign,
    aggregate_benchmark,
    generate_dataset,
    misspecify,
    run_benchmark,
)

NA = np.nan


def _design(**kw):
    base = dict(
        n_units=(40,),
        n_items=(20,),
        n_factors=(2,),
        n_replicates=2,
        hyper=Hyperparameters(n_iterations=200, n_burnin=100, n_chains=2),
    )
    base.update(kw)
    return SimDesign(**base)


class TestDesign:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ValueError):
            _design(code_distribution=(0.5, 0.5, 0.5))

    def test_fractions_sorted(self):
        with pytest.raises(ValueError):
            _design(misspecification_fractions=(0.5, 0.0))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            _design(methods=("irtm-corr", "mystery"))

    def test_cells_product(self):
        design = _design(n_units=(10, 20), n_items=(5,), n_factors=(2, 3))
        assert len(design.cells) == 4


class TestGenerate:
    def test_truth_respects_codes(self):
        design = _design()
        data, truth, constraints = generate_dataset((40, 20, 2), design, RngStream(1))
        codes = constraints.codes
        assert np.all(truth.loadings[codes == 0.0] == 0.0)
        assert np.all(truth.loadings[codes > 0] >= 0.0)
        assert np.all(truth.loadings[codes < 0] <= 0.0)

    def test_repair_guarantees_identifiability(self):
        design = _design(code_distribution=(0.5, 0.5, 0.0), n_factors=(3,))
        _, _, constraints = generate_dataset((40, 20, 3), design, RngStream(2))
        report = validate_identification(constraints, use_anchors=False)
        assert report.zero_count >= 6
        signed = np.isfinite(constraints.codes) & (constraints.codes != 0)
        assert np.all(signed.any(axis=0))

    def test_all_zero_codes_without_repair(self):
        # Y then depends only on the intercepts: column means near Phi(b_k)
        design = _design(
            n_units=(4000,),
            code_distribution=(0.0, 0.0, 1.0),
            repair_codes=False,
        )
        data, truth, constraints = generate_dataset((4000, 20, 2), design, RngStream(3))
        assert np.all(constraints.codes == 0.0)
        expected = normal_cdf(truth.intercepts)  # P(b_k + eps > 0)
        np.testing.assert_allclose(data.values.mean(axis=0), expected, atol=0.04)

    def test_same_seed_identical(self):
        design = _design()
        a = generate_dataset((40, 20, 2), design, RngStream(4))
        b = generate_dataset((40, 20, 2), design, RngStream(4))
        np.testing.assert_array_equal(a[0].values, b[0].values)
        np.testing.assert_array_equal(a[1].theta, b[1].theta)

    def test_missing_fraction_applied(self):
        design = _design(missing_fraction=0.2)
        data, _, _ = generate_dataset((200, 50, 2), design, RngStream(5))
        assert abs(np.isnan(data.values).mean() - 0.2) < 0.02

    def test_too_small_design_rejected(self):
        design = _design(n_factors=(4,))
        with pytest.raises(ValueError, match="identifiable"):
            generate_dataset((10, 3, 4), design, RngStream(6))


class TestMisspecify:
    def _constraints(self):
        design = _design(n_items=(50,), n_factors=(3,))
        return generate_dataset((10, 50, 3), design, RngStream(7))[2]

    def test_zero_fraction_identity(self):
        constraints = self._constraints()
        out = misspecify(constraints, 0.0, RngStream(8))
        np.testing.assert_array_equal(out.codes, constraints.codes)

    def test_full_fraction_changes_everything(self):
        constraints = self._constraints()
        out = misspecify(constraints, 1.0, RngStream(9))
        assert np.all(out.codes != constraints.codes)

    def test_exact_alteration_count(self):
        constraints = self._constraints()  # K*d = 150
        out = misspecify(constraints, 0.5, RngStream(10))
        assert int((out.codes != constraints.codes).sum()) == 75
        assert math.ceil(0.5 * 150) == 75

    def test_values_stay_in_palette(self):
        constraints = self._constraints()
        out = misspecify(constraints, 0.7, RngStream(11))
        assert set(np.unique(out.codes)) <= {1.0, -1.0, 0.0}


class TestBenchmark:
    def test_pca_only_runs_no_mcmc(self):
        design = _design(methods=("pca",), n_replicates=3)
        rows = run_benchmark(design)
        assert len(rows) == 3
        assert all(r.method == "pca" for r in rows)
        assert all(not r.error for r in rows)
        assert all(np.isnan(r.ess_theta) for r in rows)
        assert all(np.isfinite(r.mse_theta) for r in rows)

    def test_rows_reproducible_and_worker_independent(self):
        design = _design(methods=("pca", "irtm-uncorr"), n_replicates=2)
        a = run_benchmark(design, n_jobs=1)
        b = run_benchmark(design, n_jobs=2)
        semantic = [f for f in BenchmarkRow.__dataclass_fields__ if f != "wall_time"]
        for ra, rb in zip(a, b):
            for name in semantic:
                va, vb = getattr(ra, name), getattr(rb, name)
                if isinstance(va, float) and np.isnan(va):
                    assert np.isnan(vb)
                else:
                    assert va == vb, name

    def test_dataset_shared_across_methods(self):
        # equal per-replicate data: pca rows agree whether or not other
        # methods run in the same grid
        lone = run_benchmark(_design(methods=("pca",), n_replicates=2))
        joint = run_benchmark(_design(methods=("pca", "irtm-uncorr"), n_replicates=2))
        joint_pca = [r for r in joint if r.method == "pca"]
        for ra, rb in zip(lone, joint_pca):
            assert ra.mse_theta == rb.mse_theta

    def test_failure_rows_tagged_not_dropped(self, monkeypatch):
        import irtm.simulation as sim

        def boom(*a, **kw):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(sim, "fit_pca", boom)
        rows = run_benchmark(_design(methods=("pca",), n_replicates=2))
        assert len(rows) == 2
        assert all("synthetic failure" in r.error for r in rows)

    def test_aggregate_means(self):
        rows = [
            BenchmarkRow(10, 5, 2, 0.0, "pca", 0, mse_theta=1.0),
            BenchmarkRow(10, 5, 2, 0.0, "pca", 1, mse_theta=3.0),
            BenchmarkRow(10, 5, 2, 0.0, "pca", 2, error="failed"),
        ]
        agg = aggregate_benchmark(rows)
        assert len(agg) == 1
        assert agg[0]["n_ok"] == 2
        assert agg[0]["mse_theta"] == 2.0

    def test_mcmc_metrics_populated(self):
        design = _design(methods=("irtm-corr",), n_replicates=1)
        row = run_benchmark(design)[0]
        assert not row.error
        assert np.isfinite(row.mse_theta)
        assert np.isfinite(row.ess_theta)
        assert np.isfinite(row.rhat_theta)
        assert 0.0 <= row.coverage_theta <= 1.0
        assert row.wall_time > 0
