"""Comparison methods: unconstrained Bayesian IRT and plain PCA."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gibbs import run_sampler
from .model import ConstraintSet, Hyperparameters, PosteriorDraws, ResponseMatrix

__all__ = ["PcaResult", "fit_pca", "fit_unconstrained_irt"]


def fit_unconstrained_irt(
    data: ResponseMatrix, n_factors: int, hyper: Hyperparameters, n_jobs: int = 1
) -> PosteriorDraws:
    """Fit the same sampler with no codes, no anchors, uncorrelated factors.

    This is the classic unconstrained Bayesian IRT baseline. It is the
    identical code path as the constrained model, merely configured empty,
    so equal seeds give bit-identical draws. The model is rotation- and
    sign-unidentified by construction, which is the point of comparison.
    """
    constraints = ConstraintSet.unconstrained(data.n_items, n_factors)
    hyper = replace(hyper, correlated_factors=False)
    return run_sampler(
        data, constraints, hyper, anchor_dims=None, force=True, n_jobs=n_jobs
    )


@dataclass(frozen=True)
class PcaResult:
    scores: np.ndarray  # (N, d)
    components: np.ndarray  # (K, d), orthonormal columns
    eigenvalues: np.ndarray  # (d,), descending


def fit_pca(data: ResponseMatrix, n_factors: int) -> PcaResult:
    """Top principal components of the mean-imputed, column-centered data.

    Missing cells are imputed by their column mean before centering.
    Component signs are fixed by making each component's largest-magnitude
    coordinate positive, so repeated runs and MSE comparisons are stable.
    """
    values = data.values
    n, k = values.shape
    if k < n_factors:
        raise ValueError(f"cannot extract {n_factors} components from {k} items")

    x = values.copy()
    missing = np.isnan(x)
    if missing.any():
        with np.errstate(invalid="ignore"):
            col_mean = np.nanmean(x, axis=0)
        col_mean = np.where(np.isnan(col_mean), 0.5, col_mean)
        x[missing] = np.broadcast_to(col_mean, x.shape)[missing]
    x = x - x.mean(axis=0)

    cov = (x.T @ x) / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:n_factors]
    eigvals = eigvals[order]
    comps = eigvecs[:, order]
    for j in range(n_factors):
        lead = np.argmax(np.abs(comps[:, j]))
        if comps[lead, j] < 0:
            comps[:, j] = -comps[:, j]
    return PcaResult(scores=x @ comps, components=comps, eigenvalues=eigvals)
