"""Anchor construction, augmentation, duplicate fixing, and stripping."""
import numpy as np
import pytest

from irtm.anchors import (
    AnchorUnavailableError,
    augment_with_anchors,
    make_anchor,
    strip_anchors,
)
from irtm.gibbs import run_sampler
from irtm.model import ConstraintSet, Hyperparameters, ResponseMatrix

NA = np.nan


@pytest.fixture
def constraints():
    # column 0 = (+1, -1, 0, NA), column 1 keeps dim 1 anchorable
    return ConstraintSet(
        np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [NA, -1.0]]),
        dimension_names=("econ", "social"),
    )


class TestMakeAnchor:
    def test_positive_anchor(self, constraints):
        anchor = make_anchor(constraints, 0, +1, 4.0)
        np.testing.assert_array_equal(anchor.responses, [1.0, 0.0, NA, NA])
        assert anchor.fixed_theta[0] == 4.0
        assert np.isnan(anchor.fixed_theta[1])

    def test_negative_anchor_flips(self, constraints):
        anchor = make_anchor(constraints, 0, -1, 4.0)
        np.testing.assert_array_equal(anchor.responses, [0.0, 1.0, NA, NA])
        assert anchor.fixed_theta[0] == -4.0

    def test_unanchorable_dimension(self):
        codes = np.array([[0.0], [NA], [0.0]])
        with pytest.raises(AnchorUnavailableError, match="dim0"):
            make_anchor(ConstraintSet(codes), 0, +1, 4.0)

    def test_idempotent(self, constraints):
        a = make_anchor(constraints, 1, +1, 2.5)
        b = make_anchor(constraints, 1, +1, 2.5)
        np.testing.assert_array_equal(a.responses, b.responses)

    def test_complementary_signs(self, constraints):
        pos = make_anchor(constraints, 0, +1, 4.0)
        neg = make_anchor(constraints, 0, -1, 4.0)
        observed = ~np.isnan(pos.responses)
        assert np.array_equal(observed, ~np.isnan(neg.responses))
        assert np.all(pos.responses[observed] == 1.0 - neg.responses[observed])


class TestAugment:
    def test_two_anchors_per_dimension(self, constraints):
        data = ResponseMatrix(np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]))
        aug = augment_with_anchors(data, constraints, 4.0, "all")
        assert aug.data.n_units == 2 + 4
        assert aug.n_anchors == 4
        assert aug.fixed_mask[2:].sum() == 4

    def test_empty_selection_is_noop(self, constraints):
        data = ResponseMatrix(np.array([[1.0, 1.0, 0.0, 0.0]]))
        aug = augment_with_anchors(data, constraints, 4.0, ())
        assert aug.data.n_units == 1
        np.testing.assert_array_equal(aug.data.values, data.values)
        assert aug.n_anchors == 0

    def test_duplicate_unit_gets_fixed(self, constraints):
        # unit 0 matches the positive anchor of dim 0 on its observed items
        data = ResponseMatrix(
            np.array([[1.0, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
        )
        aug = augment_with_anchors(data, constraints, 4.0, "all")
        report = [d for d in aug.duplicate_report if d["dim"] == 0]
        assert len(report) == 1
        assert report[0]["unit_index"] == 0
        assert aug.fixed_mask[0, 0]
        assert aug.fixed_values[0, 0] == 4.0

    def test_explicit_unanchorable_dim_raises(self):
        codes = np.array([[1.0, 0.0], [-1.0, 0.0]])
        data = ResponseMatrix(np.array([[1.0, 0.0]]))
        with pytest.raises(AnchorUnavailableError):
            augment_with_anchors(data, ConstraintSet(codes), 4.0, [1])
        # "all" silently skips the unanchorable dimension
        aug = augment_with_anchors(data, ConstraintSet(codes), 4.0, "all")
        assert aug.n_anchors == 2


class TestStrip:
    def test_roundtrip_row_counts(self):
        codes = np.array([[1.0], [-1.0], [0.0]])
        data = ResponseMatrix(np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 0.0]]))
        hyper = Hyperparameters(n_iterations=60, n_burnin=40, n_chains=1, seed=1)
        kept = run_sampler(data, ConstraintSet(codes), hyper, anchor_dims="all", keep_anchors=True)
        assert kept.theta.shape[2] == 5
        stripped = strip_anchors(kept, (3, 4))
        assert stripped.theta.shape[2] == 3
        assert stripped.unit_ids == data.unit_ids
        # real-unit draws are untouched by stripping
        np.testing.assert_array_equal(stripped.theta, kept.theta[:, :, :3, :])
        assert stripped.loadings.shape == kept.loadings.shape

    def test_strip_noop(self):
        codes = np.array([[1.0], [-1.0], [0.0]])
        data = ResponseMatrix(np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]))
        hyper = Hyperparameters(n_iterations=30, n_burnin=20, n_chains=1, seed=2)
        draws = run_sampler(data, ConstraintSet(codes), hyper, anchor_dims=None, force=True)
        assert strip_anchors(draws, ()) is draws

    def test_summaries_match_manual_stripping(self):
        codes = np.array([[1.0], [-1.0], [NA]])
        data = ResponseMatrix(np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]]))
        hyper = Hyperparameters(n_iterations=80, n_burnin=50, n_chains=2, seed=3)
        full = run_sampler(data, ConstraintSet(codes), hyper, anchor_dims="all", keep_anchors=True)
        auto = run_sampler(data, ConstraintSet(codes), hyper, anchor_dims="all")
        manual = strip_anchors(full, (3, 4))
        np.testing.assert_array_equal(auto.theta_mean(), manual.theta_mean())
        np.testing.assert_allclose(
            auto.theta_mean(),
            full.theta[:, :, :3, :].reshape(-1, 3, 1).mean(axis=0),
            rtol=1e-12,
        )
