"""Diagnostics against closed forms: ESS, R-hat, Geweke, MSE, coverage."""
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irtm.diagnostics import (
    DegenerateChainWarning,
    ci_coverage,
    ess_rank_normalized,
    geweke_z,
    mse_theta,
    split_rhat,
)
from irtm.sampling import RngStream


def _ar1(gen, n, rho):
    x = np.empty(n)
    x[0] = gen.standard_normal() / np.sqrt(1 - rho**2)
    innov = gen.standard_normal(n - 1)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + innov[t - 1]
    return x


class TestEss:
    def test_iid_ess_near_n(self):
        gen = RngStream(1).generator
        chains = gen.standard_normal((4, 250))  # n = 1000 total
        ess = ess_rank_normalized(chains)
        assert 800 <= ess <= 1200

    def test_ar1_closed_form(self):
        # ESS ~= n (1 - rho) / (1 + rho) = 526 for rho = 0.9, n = 10000
        gen = RngStream(2).generator
        chain = _ar1(gen, 10_000, 0.9)
        ess = ess_rank_normalized(chain)
        target = 10_000 * 0.1 / 1.9
        assert abs(ess - target) < 0.25 * target

    def test_constant_chain_degenerate(self):
        with pytest.warns(DegenerateChainWarning):
            ess = ess_rank_normalized(np.ones(100))
        assert ess == 100.0

    def test_antithetic_cap(self):
        # perfectly negatively autocorrelated chains can exceed n but never
        # the 1.5 n antithetic bound by construction of the estimator
        gen = RngStream(3).generator
        base = gen.standard_normal(5000)
        chain = np.empty(10_000)
        chain[0::2] = base
        chain[1::2] = -base
        ess = ess_rank_normalized(chain)
        assert ess <= 1.5 * 10_000

    def test_multiple_chain_shapes(self):
        gen = RngStream(4).generator
        assert ess_rank_normalized(gen.standard_normal(400)) > 100
        assert ess_rank_normalized([gen.standard_normal(200) for _ in range(3)]) > 200


class TestSplitRhat:
    def test_stationary_chains_near_one(self):
        gen = RngStream(5).generator
        chains = gen.standard_normal((2, 10_000))
        assert 0.99 <= split_rhat(chains) <= 1.01

    def test_disjoint_supports_diverge(self):
        gen = RngStream(6).generator
        a = gen.normal(0.0, 0.1, size=1000)
        b = gen.normal(10.0, 0.1, size=1000)
        assert split_rhat(np.vstack([a, b])) > 1.1

    def test_single_chain_uses_split_halves(self):
        gen = RngStream(7).generator
        stationary = gen.standard_normal(4000)
        assert abs(split_rhat(stationary) - 1.0) < 0.02
        drifting = np.concatenate([gen.normal(0, 1, 2000), gen.normal(5, 1, 2000)])
        assert split_rhat(drifting) > 1.1

    def test_monotone_in_shift(self):
        gen = RngStream(8).generator
        base = gen.standard_normal((2, 2000))
        rhats = []
        for shift in (0.0, 1.0, 3.0):
            shifted = base.copy()
            shifted[1] += shift
            rhats.append(split_rhat(shifted))
        assert rhats[0] < rhats[1] < rhats[2]

    def test_constant_chain_degenerate(self):
        with pytest.warns(DegenerateChainWarning):
            out = split_rhat(np.zeros(50))
        assert np.isnan(out)


class TestGeweke:
    def test_level_shift_detected(self):
        gen = RngStream(9).generator
        chain = np.concatenate([gen.normal(0, 1, 1000), gen.normal(2, 1, 1000)])
        z, p = geweke_z(chain)
        assert abs(z) > 3.0
        assert p < 0.01

    def test_default_windows(self):
        gen = RngStream(10).generator
        chain = gen.standard_normal(1000)
        assert geweke_z(chain) == geweke_z(chain, frac_first=0.1, frac_last=0.5)

    def test_calibration_on_stationary_chains(self):
        # rejection rate at alpha = 0.05 should be close to 5%
        gen = RngStream(11).generator
        rejections = 0
        reps = 400
        for _ in range(reps):
            _, p = geweke_z(gen.standard_normal(1000))
            rejections += p < 0.05
        assert 0.02 <= rejections / reps <= 0.08

    def test_zero_variance_degenerate(self):
        with pytest.warns(DegenerateChainWarning):
            z, p = geweke_z(np.ones(500))
        assert np.isnan(z) and np.isnan(p)


class TestMse:
    def test_trivial_values(self):
        x = np.arange(6.0).reshape(3, 2)
        assert mse_theta(x, x) == 0.0
        assert mse_theta(np.ones((2, 2)), np.zeros((2, 2))) == 1.0

    def test_matches_scalar_loop_oracle(self):
        gen = RngStream(12).generator
        est = gen.standard_normal((7, 3))
        truth = gen.standard_normal((7, 3))
        acc = 0.0
        for i in range(7):
            for j in range(3):
                acc += (est[i, j] - truth[i, j]) ** 2
        assert abs(mse_theta(est, truth) - acc / 21) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_theta(np.zeros((2, 2)), np.zeros((3, 2)))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariance(self, seed):
        gen = RngStream(seed).generator
        est = gen.standard_normal((10, 2))
        truth = gen.standard_normal((10, 2))
        perm = gen.permutation(10)
        assert np.isclose(mse_theta(est, truth), mse_theta(est[perm], truth[perm]))


class TestCoverage:
    def test_truth_at_median(self):
        gen = RngStream(13).generator
        draws = gen.standard_normal((500, 20))
        truth = np.median(draws, axis=0)
        assert ci_coverage(draws, truth, 0.95) == 1.0

    def test_calibrated_posterior(self):
        # calibration oracle: truth behaves like one extra draw from each
        # parameter's posterior, so nominal and actual coverage agree
        gen = RngStream(14).generator
        centers = gen.standard_normal(2000)
        draws = centers[None, :] + gen.standard_normal((400, 2000))
        truth = centers + gen.standard_normal(2000)
        assert abs(ci_coverage(draws, truth, 0.95) - 0.95) < 0.02

    def test_level_zero_empty_interval(self):
        gen = RngStream(15).generator
        draws = gen.standard_normal((100, 5))
        assert ci_coverage(draws, np.zeros(5), 0.0) == 0.0
