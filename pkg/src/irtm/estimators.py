"""Scikit-learn style estimator wrappers.

These compose the sampler and baselines with the wider ecosystem:
``get_params``/``set_params``/``clone`` work, and the PCA baseline is a
proper transformer. Latent-position estimation is transductive (positions
exist for the fitted units only), so the IRT estimators expose
``fit_transform`` and fitted attributes rather than out-of-sample
``transform``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .baselines import fit_pca, fit_unconstrained_irt
from .gibbs import run_sampler
from .model import ConstraintSet, Hyperparameters, ResponseMatrix

__all__ = ["IRTM", "BinaryPCA", "UnconstrainedIRT", "check_response_matrix"]


def check_response_matrix(X) -> ResponseMatrix:
    """Validate estimator input: a ResponseMatrix or binary array with NaN."""
    if isinstance(X, ResponseMatrix):
        return X
    return ResponseMatrix(np.asarray(X, dtype=float))


def _hyper_from(est, correlated: bool) -> Hyperparameters:
    return Hyperparameters(
        nu0=est.nu0,
        scale_matrix=est.scale_matrix,
        anchor_scale=est.anchor_scale,
        n_iterations=est.n_iterations,
        n_burnin=est.n_burnin,
        thin=est.thin,
        n_chains=est.n_chains,
        correlated_factors=correlated,
        inner_tmvn_sweeps=est.inner_tmvn_sweeps,
        seed=est.random_state,
    )


class IRTM(BaseEstimator):
    """Constrained Bayesian IRT with analyst-coded loading directions.

    Parameters mirror the sampler configuration; ``constraints`` is a
    ConstraintSet or a K x d code array (NaN for no prior). After ``fit``,
    posterior draws and their summaries are available as attributes.
    """

    def __init__(
        self,
        constraints=None,
        *,
        n_iterations: int = 3000,
        n_burnin: int = 2000,
        thin: int = 1,
        n_chains: int = 2,
        correlated_factors: bool = True,
        anchor_dims="all",
        anchor_scale: float = 4.0,
        nu0: float | None = None,
        scale_matrix=None,
        inner_tmvn_sweeps: int = 5,
        force: bool = False,
        n_jobs: int = 1,
        random_state: int = 0,
    ):
        self.constraints = constraints
        self.n_iterations = n_iterations
        self.n_burnin = n_burnin
        self.thin = thin
        self.n_chains = n_chains
        self.correlated_factors = correlated_factors
        self.anchor_dims = anchor_dims
        self.anchor_scale = anchor_scale
        self.nu0 = nu0
        self.scale_matrix = scale_matrix
        self.inner_tmvn_sweeps = inner_tmvn_sweeps
        self.force = force
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _constraint_set(self) -> ConstraintSet:
        if self.constraints is None:
            raise ValueError("IRTM requires a constraint table; use UnconstrainedIRT otherwise")
        if isinstance(self.constraints, ConstraintSet):
            return self.constraints
        return ConstraintSet(np.asarray(self.constraints, dtype=float))

    def fit(self, X, y=None):
        data = check_response_matrix(X)
        constraints = self._constraint_set()
        hyper = _hyper_from(self, self.correlated_factors)
        self.draws_ = run_sampler(
            data,
            constraints,
            hyper,
            anchor_dims=self.anchor_dims,
            force=self.force,
            n_jobs=self.n_jobs,
        )
        self.n_features_in_ = data.n_items
        self.theta_mean_ = self.draws_.theta_mean()
        self.loadings_mean_ = self.draws_.loadings_mean()
        self.intercepts_mean_ = self.draws_.intercepts_mean()
        self.factor_cov_mean_ = self.draws_.factor_cov_mean()
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).theta_mean_

    def transform(self, X=None):
        """Posterior-mean positions of the fitted units (transductive)."""
        if not hasattr(self, "theta_mean_"):
            raise RuntimeError("IRTM instance is not fitted yet")
        return self.theta_mean_


class UnconstrainedIRT(BaseEstimator):
    """Classic unconstrained Bayesian IRT baseline (no codes, no anchors)."""

    def __init__(
        self,
        n_factors: int = 1,
        *,
        n_iterations: int = 3000,
        n_burnin: int = 2000,
        thin: int = 1,
        n_chains: int = 2,
        nu0: float | None = None,
        scale_matrix=None,
        anchor_scale: float = 4.0,
        inner_tmvn_sweeps: int = 5,
        n_jobs: int = 1,
        random_state: int = 0,
    ):
        self.n_factors = n_factors
        self.n_iterations = n_iterations
        self.n_burnin = n_burnin
        self.thin = thin
        self.n_chains = n_chains
        self.nu0 = nu0
        self.scale_matrix = scale_matrix
        self.anchor_scale = anchor_scale
        self.inner_tmvn_sweeps = inner_tmvn_sweeps
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, X, y=None):
        data = check_response_matrix(X)
        hyper = _hyper_from(self, correlated=False)
        self.draws_ = fit_unconstrained_irt(data, self.n_factors, hyper, n_jobs=self.n_jobs)
        self.n_features_in_ = data.n_items
        self.theta_mean_ = self.draws_.theta_mean()
        self.loadings_mean_ = self.draws_.loadings_mean()
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).theta_mean_


class BinaryPCA(BaseEstimator, TransformerMixin):
    """PCA on mean-imputed, column-centered binary data."""

    def __init__(self, n_components: int = 1):
        self.n_components = n_components

    def fit(self, X, y=None):
        data = check_response_matrix(X)
        result = fit_pca(data, self.n_components)
        self.components_ = result.components
        self.eigenvalues_ = result.eigenvalues
        self.scores_ = result.scores
        self.mean_ = np.nan_to_num(np.nanmean(data.values, axis=0), nan=0.5)
        self.n_features_in_ = data.n_items
        return self

    def transform(self, X):
        if not hasattr(self, "components_"):
            raise RuntimeError("BinaryPCA instance is not fitted yet")
        data = check_response_matrix(X)
        x = data.values.copy()
        missing = np.isnan(x)
        if missing.any():
            x[missing] = np.broadcast_to(self.mean_, x.shape)[missing]
        return (x - self.mean_) @ self.components_
