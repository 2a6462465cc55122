"""Convergence statistics and estimation metrics.

Rank-normalized split effective sample size and split R-hat follow the
Vehtari-Gelman-Simpson-Carpenter-Buerkner construction: chains are split
in half, pooled draws are replaced by normal quantiles of their average
ranks, and the autocovariance sum is truncated by Geyer's initial-monotone
rule. The Geweke statistic compares the means of an early and a late
window using spectral-density-at-zero variance estimates.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "DegenerateChainWarning",
    "ci_coverage",
    "ess_rank_normalized",
    "geweke_z",
    "mse_theta",
    "split_rhat",
]

# lag-window bandwidth for spectral density estimates, as a fraction of the
# segment length; pinned for reproducibility
_SPECTRAL_BANDWIDTH = 0.04


class DegenerateChainWarning(UserWarning):
    """The chain carries no variation; the statistic is not informative."""


def _as_chain_matrix(chains) -> np.ndarray:
    """Coerce input to an (n_chains, n_draws) array."""
    if isinstance(chains, np.ndarray) and chains.ndim == 1:
        arr = chains[None, :]
    else:
        arr = np.atleast_2d(np.asarray(chains, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"chains must be 1- or 2-dimensional, got shape {arr.shape}")
    return arr.astype(float)


def _split_chains(arr: np.ndarray) -> np.ndarray:
    half = arr.shape[1] // 2
    if half < 2:
        raise ValueError("chains too short to split")
    return np.vstack([arr[:, :half], arr[:, -half:]])


def _rank_normalize(arr: np.ndarray) -> np.ndarray:
    """Average ranks across all chains mapped through normal quantiles."""
    flat = arr.ravel()
    order = np.argsort(flat, kind="stable")
    ranks = np.empty(flat.size)
    ranks[order] = np.arange(1, flat.size + 1)
    # average tied ranks
    uniq, inverse = np.unique(flat, return_inverse=True)
    if uniq.size < flat.size:
        sums = np.bincount(inverse, weights=ranks)
        counts = np.bincount(inverse)
        ranks = (sums / counts)[inverse]
    z = ndtri((ranks - 0.375) / (flat.size + 0.25))
    return z.reshape(arr.shape)


def _autocov(arr: np.ndarray) -> np.ndarray:
    """Per-chain autocovariance (biased, FFT-based), lag along axis 1."""
    n = arr.shape[1]
    centered = arr - arr.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    fft = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(fft * np.conjugate(fft), n=size, axis=1)[:, :n].real
    return acov / n


def _is_degenerate(arr: np.ndarray) -> bool:
    return bool(np.all(arr == arr.ravel()[0]))


def ess_rank_normalized(chains) -> float:
    """Rank-normalized split effective sample size.

    ``chains`` is one draw sequence or a list/array of per-chain sequences.
    A constant input is degenerate: the total draw count is returned and a
    DegenerateChainWarning is emitted.
    """
    arr = _as_chain_matrix(chains)
    total = arr.size
    if _is_degenerate(arr):
        warnings.warn("constant chain: ESS undefined", DegenerateChainWarning, stacklevel=2)
        return float(total)
    z = _rank_normalize(_split_chains(arr))
    m, n = z.shape

    acov = _autocov(z)
    mean_var = float(np.mean(acov[:, 0])) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += float(np.var(z.mean(axis=1), ddof=1))
    if var_plus == 0.0:
        warnings.warn("zero variance after splitting", DegenerateChainWarning, stacklevel=2)
        return float(total)

    mean_acov = acov.mean(axis=0)
    rho = np.zeros(n)
    rho[0] = 1.0
    rho[1] = 1.0 - (mean_var - mean_acov[1]) / var_plus

    # Geyer initial positive sequence: accumulate lag pairs while their sum
    # stays positive
    t = 1
    rho_even = 1.0
    rho_odd = rho[1]
    while t < n - 3 and (rho_even + rho_odd) > 0.0:
        rho_even = 1.0 - (mean_var - mean_acov[t + 1]) / var_plus
        rho_odd = 1.0 - (mean_var - mean_acov[t + 2]) / var_plus
        if rho_even + rho_odd >= 0.0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0.0:
        rho[max_t + 1] = rho_even

    # Geyer initial monotone sequence: enforce non-increasing pair sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2

    tau = -1.0 + 2.0 * float(np.sum(rho[: max_t + 2]))
    # antithetic chains push tau toward zero; floor it at the 1.5 N bound
    tau = max(tau, 1.0 / 1.5)
    return float(m * n / tau)


def split_rhat(chains) -> float:
    """Rank-normalized split potential-scale-reduction statistic.

    Values near 1 indicate the split half-chains agree; above about 1.1
    the chains have not mixed. A single chain is compared against its own
    halves.
    """
    arr = _as_chain_matrix(chains)
    if _is_degenerate(arr):
        warnings.warn("constant chain: R-hat undefined", DegenerateChainWarning, stacklevel=2)
        return float("nan")
    z = _rank_normalize(_split_chains(arr))
    m, n = z.shape
    within = float(np.mean(np.var(z, axis=1, ddof=1)))
    between_over_n = float(np.var(z.mean(axis=1), ddof=1))
    if within == 0.0:
        warnings.warn("zero within-chain variance", DegenerateChainWarning, stacklevel=2)
        return float("nan")
    return float(np.sqrt((within * (n - 1.0) / n + between_over_n) / within))


def _spectral_density_zero(segment: np.ndarray) -> float:
    """Lag-window estimate of the spectral density at frequency zero."""
    n = segment.size
    centered = segment - segment.mean()
    lags = max(1, int(_SPECTRAL_BANDWIDTH * n))
    acov = np.correlate(centered, centered, mode="full")[n - 1 : n + lags] / n
    weights = 1.0 - np.arange(1, lags + 1) / (lags + 1.0)
    return float(acov[0] + 2.0 * np.sum(weights * acov[1:]))


def geweke_z(chain, frac_first: float = 0.1, frac_last: float = 0.5):
    """Geweke mean-comparison test between an early and a late window.

    Returns ``(z, p)`` with a two-sided p-value. Zero-variance windows are
    degenerate: returns ``(nan, nan)`` with a DegenerateChainWarning.
    """
    arr = np.asarray(chain, dtype=float).ravel()
    n = arr.size
    n_first = int(frac_first * n)
    n_last = int(frac_last * n)
    if n_first < 2 or n_last < 2:
        raise ValueError("chain too short for the requested window fractions")
    first = arr[:n_first]
    last = arr[n - n_last :]
    sv_first = _spectral_density_zero(first) / n_first
    sv_last = _spectral_density_zero(last) / n_last
    denom = sv_first + sv_last
    if denom <= 0.0:
        warnings.warn("zero variance in Geweke windows", DegenerateChainWarning, stacklevel=2)
        return float("nan"), float("nan")
    z = (first.mean() - last.mean()) / np.sqrt(denom)
    p = 2.0 * (1.0 - ndtr(abs(z)))
    return float(z), float(p)


def mse_theta(estimates: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared error over all entries; no rotation or sign alignment.

    Constraints and anchors fix the orientation of the latent space, so
    estimates are compared to the truth as-is.
    """
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimates.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimates.shape} vs {truth.shape}")
    return float(np.mean((estimates - truth) ** 2))


def ci_coverage(draws: np.ndarray, truth: np.ndarray, level: float = 0.95) -> float:
    """Fraction of parameters whose truth falls in the equal-tailed interval.

    ``draws`` has the draw axis first; quantiles use linear interpolation
    between order statistics. ``level <= 0`` is the empty interval and
    returns 0.
    """
    if level <= 0.0:
        return 0.0
    draws = np.asarray(draws, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if draws.shape[1:] != truth.shape:
        raise ValueError(f"draws shape {draws.shape} does not match truth {truth.shape}")
    alpha = (1.0 - level) / 2.0
    lo = np.quantile(draws, alpha, axis=0)
    hi = np.quantile(draws, 1.0 - alpha, axis=0)
    return float(np.mean((truth >= lo) & (truth <= hi)))
