"""Estimator-API behavior: params, cloning, fitting, transforming."""
import numpy as np
import pytest
from sklearn.base import clone

from irtm.estimators import IRTM, BinaryPCA, UnconstrainedIRT
from irtm.model import ConstraintSet
from irtm.sampling import RngStream
from irtm.simulation import SimDesign, generate_dataset
from irtm.model import Hyperparameters

NA = np.nan


@pytest.fixture(scope="module")
def small_problem():
    design = SimDesign(
        n_units=(30,),
        n_items=(12,),
        n_factors=(2,),
        hyper=Hyperparameters(n_iterations=200, n_burnin=100),
    )
    data, truth, constraints = generate_dataset((30, 12, 2), design, RngStream(3))
    return data, truth, constraints


class TestIRTM:
    def test_get_set_params_and_clone(self):
        est = IRTM(np.array([[1.0, 0.0]]), n_iterations=50, n_burnin=10, random_state=7)
        params = est.get_params()
        assert params["n_iterations"] == 50
        twin = clone(est)
        assert twin.get_params()["random_state"] == 7
        est.set_params(n_chains=3)
        assert est.n_chains == 3

    def test_fit_exposes_summaries(self, small_problem):
        data, truth, constraints = small_problem
        est = IRTM(constraints, n_iterations=200, n_burnin=100, n_chains=1, random_state=1)
        est.fit(data.values)
        assert est.theta_mean_.shape == (30, 2)
        assert est.loadings_mean_.shape == (12, 2)
        assert est.draws_.n_draws == 100
        assert est.n_features_in_ == 12

    def test_fit_transform_returns_positions(self, small_problem):
        data, _, constraints = small_problem
        est = IRTM(constraints, n_iterations=120, n_burnin=80, n_chains=1)
        out = est.fit_transform(data.values)
        np.testing.assert_array_equal(out, est.theta_mean_)

    def test_requires_constraints(self, small_problem):
        data, _, _ = small_problem
        with pytest.raises(ValueError, match="constraint"):
            IRTM().fit(data.values)

    def test_unfitted_transform_raises(self):
        with pytest.raises(RuntimeError):
            IRTM(np.array([[1.0]])).transform()

    def test_determinism_via_random_state(self, small_problem):
        data, _, constraints = small_problem
        kw = dict(n_iterations=100, n_burnin=60, n_chains=1, random_state=11)
        a = IRTM(constraints, **kw).fit(data.values)
        b = IRTM(constraints, **kw).fit(data.values)
        np.testing.assert_array_equal(a.draws_.theta, b.draws_.theta)


class TestUnconstrainedIRT:
    def test_fit(self, small_problem):
        data, _, _ = small_problem
        est = UnconstrainedIRT(n_factors=2, n_iterations=120, n_burnin=80, n_chains=1)
        est.fit(data.values)
        assert est.theta_mean_.shape == (30, 2)


class TestBinaryPCA:
    def test_transform_matches_scores_on_training_data(self, small_problem):
        data, _, _ = small_problem
        est = BinaryPCA(n_components=2).fit(data.values)
        np.testing.assert_allclose(est.transform(data.values), est.scores_, atol=1e-10)

    def test_transform_new_data(self, small_problem):
        data, _, _ = small_problem
        est = BinaryPCA(n_components=2).fit(data.values)
        new = data.values[:5]
        assert est.transform(new).shape == (5, 2)

    def test_clone_and_params(self):
        est = BinaryPCA(n_components=3)
        assert clone(est).get_params()["n_components"] == 3
