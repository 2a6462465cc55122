"""PCA baseline contracts; the IRT baseline is covered in test_gibbs."""
import numpy as np
import pytest

from irtm.baselines import fit_pca
from irtm.model import ResponseMatrix
from irtm.sampling import RngStream


class TestPca:
    def test_identical_rows_give_zero_scores(self):
        data = ResponseMatrix(np.tile([1.0, 0.0, 1.0, 1.0], (6, 1)))
        result = fit_pca(data, 2)
        np.testing.assert_allclose(result.scores, 0.0, atol=1e-12)

    def test_rank_one_pattern_dominates_spectrum(self):
        # single latent factor: half the units answer yes to everything
        gen = RngStream(1).generator
        strength = np.repeat([0.95, 0.05], 50)
        values = (gen.random((100, 40)) < strength[:, None]).astype(float)
        result = fit_pca(ResponseMatrix(values), 3)
        total_var = np.trace(np.cov((values - values.mean(0)).T))
        assert result.eigenvalues[0] / total_var > 0.8

    def test_eigenvalues_sorted_descending(self):
        gen = RngStream(2).generator
        values = gen.integers(0, 2, size=(30, 10)).astype(float)
        result = fit_pca(ResponseMatrix(values), 5)
        assert np.all(np.diff(result.eigenvalues) <= 1e-12)

    def test_components_orthonormal(self):
        gen = RngStream(3).generator
        values = gen.integers(0, 2, size=(50, 12)).astype(float)
        result = fit_pca(ResponseMatrix(values), 4)
        gram = result.components.T @ result.components
        assert np.max(np.abs(gram - np.eye(4))) < 1e-10

    def test_deterministic_sign_convention(self):
        gen = RngStream(4).generator
        values = gen.integers(0, 2, size=(40, 8)).astype(float)
        a = fit_pca(ResponseMatrix(values), 3)
        b = fit_pca(ResponseMatrix(values), 3)
        np.testing.assert_array_equal(a.components, b.components)
        for j in range(3):
            lead = np.argmax(np.abs(a.components[:, j]))
            assert a.components[lead, j] > 0

    def test_missing_cells_mean_imputed(self):
        gen = RngStream(5).generator
        values = gen.integers(0, 2, size=(30, 6)).astype(float)
        values[gen.random((30, 6)) < 0.2] = np.nan
        result = fit_pca(ResponseMatrix(values), 2)
        assert np.all(np.isfinite(result.scores))

    def test_too_few_items(self):
        data = ResponseMatrix(np.zeros((5, 2)) + np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            fit_pca(data, 3)
