"""Gibbs sampler for the constrained probit factor model.

Data augmentation in the Albert-Chib style: each binary response gets a
latent normal utility, after which every conditional update is conjugate.
Internal sign convention throughout: the latent utility for unit i and
item k is N(loadings_k . theta_i + intercept_k, 1) and a response is 1
exactly when the utility is positive, so P(yes) = Phi(lam.theta + b).

Per-iteration update order: theta, latent utilities, factor covariance,
intercepts, loadings. Anchor rows take part in every update, except that
their pinned coordinates are conditioned out of the theta draw and their
rows are excluded from the factor-covariance scatter (synthetic extremes
would inflate the estimated correlations).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed


from .anchors import augment_with_anchors, strip_anchors
from .model import (
    ConstraintSet,
    Hyperparameters,
    ParameterState,
    PosteriorDraws,
    ResponseMatrix,
    stable_digest,
    validate_identification,
)
from .sampling import (
    DecompositionError,
    RngStream,
    as_generator,
    inverse_wishart,
    multivariate_normal,
    truncated_normal,
)

__all__ = [
    "ChainConfig",
    "IdentificationError",
    "init_state",
    "make_workspace",
    "run_chain",
    "run_sampler",
    "update_factor_cov",
    "update_intercepts",
    "update_latent",
    "update_loadings",
    "update_theta",
]


class IdentificationError(RuntimeError):
    """The constraint table does not pin rotation; pass force=True to override."""

    def __init__(self, report):
        super().__init__(
            "model is underidentified:\n" + report.describe()
        )
        self.report = report


@dataclass(frozen=True)
class ChainConfig:
    """One chain's identity: its index and its dedicated random stream."""

    chain_id: int
    hyper: Hyperparameters

    @property
    def stream(self) -> RngStream:
        return RngStream(self.hyper.seed, self.chain_id)


@dataclass
class _Workspace:
    """Static per-run structures shared by every update."""

    hyper: Hyperparameters
    codes: np.ndarray  # (K, d)
    lo_y: np.ndarray  # (N', K) latent-utility truncation bounds
    hi_y: np.ndarray
    lo_lam: np.ndarray  # (K, d) loading truncation bounds
    hi_lam: np.ndarray
    prior_prec: np.ndarray  # (K, d), prior precision of free loadings
    fixed_mask: np.ndarray  # (N', d)
    fixed_values: np.ndarray  # (N', d)
    free_rows: np.ndarray  # row indices with no pinned coordinate
    pinned_rows: np.ndarray  # row indices with at least one pinned coordinate
    real_rows: np.ndarray  # bool, rows that enter the covariance scatter
    exact_groups: list  # [(free_dims array, item indices array)]
    sweep_items: list  # per dimension, constrained items free on it

    @property
    def n_rows(self) -> int:
        return self.lo_y.shape[0]

    @property
    def n_items(self) -> int:
        return self.codes.shape[0]

    @property
    def n_factors(self) -> int:
        return self.codes.shape[1]


def make_workspace(
    values: np.ndarray,
    codes: np.ndarray,
    hyper: Hyperparameters,
    fixed_mask: np.ndarray | None = None,
    fixed_values: np.ndarray | None = None,
    real_rows: np.ndarray | None = None,
) -> _Workspace:
    """Precompute the static structures for one sampling run.

    ``values`` is the (possibly anchor-augmented) N' x K response array
    with NaN for missing cells.
    """
    values = np.asarray(values, dtype=float)
    codes = np.asarray(codes, dtype=float)
    n, k = values.shape
    d = codes.shape[1]
    hyper = hyper.resolve(d)

    lo_y = np.full((n, k), -np.inf)
    hi_y = np.full((n, k), np.inf)
    lo_y[values == 1.0] = 0.0
    hi_y[values == 0.0] = 0.0

    finite = np.isfinite(codes)
    pos = finite & (codes > 0)
    neg = finite & (codes < 0)
    zero = codes == 0.0
    lo_lam = np.where(pos, 0.0, -np.inf)
    hi_lam = np.where(neg, 0.0, np.inf)
    prior_prec = np.ones((k, d))
    prior_prec[pos | neg] = 1.0 / codes[pos | neg] ** 2

    if fixed_mask is None:
        fixed_mask = np.zeros((n, d), dtype=bool)
        fixed_values = np.zeros((n, d))
    pinned = fixed_mask.any(axis=1)
    if real_rows is None:
        real_rows = np.ones(n, dtype=bool)

    constrained = (pos | neg).any(axis=1)
    groups: dict[tuple, list[int]] = {}
    for item in np.nonzero(~constrained)[0]:
        key = tuple(np.nonzero(~zero[item])[0])
        groups.setdefault(key, []).append(int(item))
    exact_groups = [
        (np.asarray(dims, dtype=int), np.asarray(items, dtype=int))
        for dims, items in sorted(groups.items())
        if len(dims) > 0
    ]
    sweep_items = [
        np.nonzero(constrained & ~zero[:, j])[0] for j in range(d)
    ]

    return _Workspace(
        hyper=hyper,
        codes=codes,
        lo_y=lo_y,
        hi_y=hi_y,
        lo_lam=lo_lam,
        hi_lam=hi_lam,
        prior_prec=prior_prec,
        fixed_mask=fixed_mask,
        fixed_values=fixed_values,
        free_rows=np.nonzero(~pinned)[0],
        pinned_rows=np.nonzero(pinned)[0],
        real_rows=real_rows,
        exact_groups=exact_groups,
        sweep_items=sweep_items,
    )


def _normalize_correlation(mat: np.ndarray, mode: str) -> np.ndarray:
    """Rescale a covariance draw to unit diagonal.

    "symmetric" divides entry (i, j) by sqrt(m_ii * m_jj), which always
    yields a valid correlation matrix. "row" divides row i by m_ii, which
    is generally asymmetric for unequal diagonals and exists only for
    comparison; callers must check the result.
    """
    if mode == "symmetric":
        s = np.sqrt(np.diag(mat))
        cov = mat / np.outer(s, s)
    elif mode == "row":
        cov = mat / np.diag(mat)[:, None]
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    np.fill_diagonal(cov, 1.0)
    return cov


def _is_valid_correlation(cov: np.ndarray) -> bool:
    if not np.allclose(cov, cov.T, atol=1e-12):
        return False
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return False
    return True


def _draw_factor_cov(rng, hyper: Hyperparameters, df: float, scale: np.ndarray) -> np.ndarray:
    for _ in range(100):
        draw = inverse_wishart(rng, df, scale)
        cov = _normalize_correlation(draw, hyper.sigma_normalization)
        if _is_valid_correlation(cov):
            return cov
    raise DecompositionError(
        "factor covariance draw failed: 100 normalized draws in a row were "
        f"not symmetric positive-definite (mode={hyper.sigma_normalization!r})"
    )


def init_state(ws: _Workspace, rng) -> ParameterState:
    """Draw every parameter once from its prior; pin anchor coordinates."""
    gen = as_generator(rng)
    hyper = ws.hyper
    n, k, d = ws.n_rows, ws.n_items, ws.n_factors

    if hyper.correlated_factors:
        cov = _draw_factor_cov(gen, hyper, hyper.nu0, hyper.scale_matrix)
    else:
        cov = np.eye(d)
    theta = multivariate_normal(gen, np.zeros(d), cov, size=n)
    theta[ws.fixed_mask] = ws.fixed_values[ws.fixed_mask]

    z = gen.standard_normal((k, d))
    finite = np.isfinite(ws.codes)
    pos = finite & (ws.codes > 0)
    neg = finite & (ws.codes < 0)
    na = ~finite
    loadings = np.zeros((k, d))
    loadings[na] = z[na]
    loadings[pos] = np.abs(z[pos]) * ws.codes[pos]
    loadings[neg] = -np.abs(z[neg]) * np.abs(ws.codes[neg])

    intercepts = gen.standard_normal(k)
    ystar = theta @ loadings.T + intercepts[None, :] + gen.standard_normal((n, k))
    return ParameterState(
        theta=theta,
        loadings=loadings,
        intercepts=intercepts,
        ystar=ystar,
        factor_cov=cov,
        fixed_mask=ws.fixed_mask,
        fixed_values=ws.fixed_values,
    )


def update_theta(state: ParameterState, ws: _Workspace, rng) -> None:
    """Conjugate draw of every unit's latent position.

    Shared precision ``lam' lam + cov^{-1}`` across units; rows with pinned
    coordinates draw only the free block conditional on the pinned values.
    """
    gen = as_generator(rng)
    lam = state.loadings
    d = ws.n_factors
    try:
        np.linalg.cholesky(state.factor_cov)
        cov_inv = np.linalg.inv(state.factor_cov)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("factor covariance is singular") from exc
    prec = lam.T @ lam + cov_inv
    resid = state.ystar - state.intercepts[None, :]
    lin = resid @ lam  # precision-times-mean, one row per unit
    try:
        chol = np.linalg.cholesky(prec)  # prec = chol chol'
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("theta-update precision matrix is singular") from exc
    mean = np.linalg.solve(prec, lin.T).T

    theta = state.theta
    free = ws.free_rows
    z = gen.standard_normal((free.size, d))
    theta[free] = mean[free] + np.linalg.solve(chol.T, z.T).T

    for row in ws.pinned_rows:
        fmask = ws.fixed_mask[row]
        theta[row, fmask] = ws.fixed_values[row, fmask]
        umask = ~fmask
        ku = int(umask.sum())
        if ku == 0:
            continue
        sub = prec[np.ix_(umask, umask)]
        rhs = lin[row, umask] - prec[np.ix_(umask, fmask)] @ ws.fixed_values[row, fmask]
        try:
            chol_u = np.linalg.cholesky(sub)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(
                f"theta-update precision singular for pinned row {row}"
            ) from exc
        cmean = np.linalg.solve(sub, rhs)
        theta[row, umask] = cmean + np.linalg.solve(chol_u.T, gen.standard_normal(ku))


def update_latent(state: ParameterState, ws: _Workspace, rng) -> None:
    """Redraw the latent utilities, truncated by the observed responses.

    Observed 1 forces a nonnegative utility, observed 0 a nonpositive one;
    missing responses draw from the untruncated normal (imputation).
    """
    mean = state.theta @ state.loadings.T + state.intercepts[None, :]
    state.ystar = truncated_normal(rng, mean, 1.0, ws.lo_y, ws.hi_y)


def update_factor_cov(state: ParameterState, ws: _Workspace, rng) -> None:
    """Inverse-Wishart draw of the factor covariance, rescaled to unit diagonal.

    Skipped entirely when factors are fixed uncorrelated. Synthetic anchor
    rows stay out of the scatter matrix.
    """
    hyper = ws.hyper
    if not hyper.correlated_factors:
        return
    th = state.theta[ws.real_rows]
    df = hyper.nu0 + th.shape[0]
    scale = hyper.scale_matrix + th.T @ th
    state.factor_cov = _draw_factor_cov(rng, hyper, df, scale)


def update_intercepts(state: ParameterState, ws: _Workspace, rng) -> None:
    """Conjugate draw of the per-item intercepts under their N(0, 1) prior."""
    gen = as_generator(rng)
    resid = state.ystar - state.theta @ state.loadings.T
    n = resid.shape[0]
    v = 1.0 / (n + 1.0)
    state.intercepts = v * resid.sum(axis=0) + np.sqrt(v) * gen.standard_normal(ws.n_items)


def update_loadings(state: ParameterState, ws: _Workspace, rng) -> None:
    """Draw the loading rows under their coded truncation boxes.

    Zero-coded entries stay exactly zero and are conditioned out. Items
    without any sign constraint get an exact multivariate draw (grouped by
    their zero pattern); sign-constrained items run coordinate-wise Gibbs
    sweeps over the conditional truncated normals, warm-started at the
    current value and vectorized across items.
    """
    gen = as_generator(rng)
    theta = state.theta
    scatter = theta.T @ theta
    resid = state.ystar - state.intercepts[None, :]
    lin = theta.T @ resid  # (d, K)
    lam = state.loadings

    for dims, items in ws.exact_groups:
        sub = scatter[np.ix_(dims, dims)] + np.eye(dims.size)
        try:
            chol = np.linalg.cholesky(sub)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError("loading-update precision matrix is singular") from exc
        mean = np.linalg.solve(sub, lin[np.ix_(dims, items)])
        z = gen.standard_normal(mean.shape)
        lam[np.ix_(items, dims)] = (mean + np.linalg.solve(chol.T, z)).T

    for _ in range(ws.hyper.inner_tmvn_sweeps):
        for j in range(ws.n_factors):
            items = ws.sweep_items[j]
            if items.size == 0:
                continue
            cross = lam[items] @ scatter[j] - scatter[j, j] * lam[items, j]
            p = scatter[j, j] + ws.prior_prec[items, j]
            cmean = (lin[j, items] - cross) / p
            lam[items, j] = truncated_normal(
                gen, cmean, 1.0 / np.sqrt(p), ws.lo_lam[items, j], ws.hi_lam[items, j]
            )


def _check_draw(state: ParameterState, ws: _Workspace, iteration: int) -> None:
    """Hard invariants enforced on every stored draw."""
    codes = ws.codes
    lam = state.loadings
    finite = np.isfinite(codes)
    if not np.all(lam[codes == 0.0] == 0.0):
        raise RuntimeError(f"iteration {iteration}: zero-coded loading left zero")
    if not np.all(lam[finite & (codes > 0)] >= 0.0):
        raise RuntimeError(f"iteration {iteration}: positive-coded loading went negative")
    if not np.all(lam[finite & (codes < 0)] <= 0.0):
        raise RuntimeError(f"iteration {iteration}: negative-coded loading went positive")
    if not np.all(state.theta[ws.fixed_mask] == ws.fixed_values[ws.fixed_mask]):
        raise RuntimeError(f"iteration {iteration}: anchor coordinate drifted")
    if ws.hyper.correlated_factors:
        cov = state.factor_cov
        off = cov[~np.eye(cov.shape[0], dtype=bool)]
        if not (
            np.allclose(cov, cov.T, atol=1e-12)
            and np.allclose(np.diag(cov), 1.0, atol=1e-12)
            and np.all(np.abs(off) < 1.0)
        ):
            raise RuntimeError(f"iteration {iteration}: invalid factor covariance draw")


def run_chain(ws: _Workspace, chain_id: int) -> dict:
    """Run one chain; return its stored draws as arrays."""
    hyper = ws.hyper
    gen = RngStream(hyper.seed, chain_id).generator
    state = init_state(ws, gen)

    n_stored = hyper.n_stored
    n, k, d = ws.n_rows, ws.n_items, ws.n_factors
    theta = np.empty((n_stored, n, d))
    loadings = np.empty((n_stored, k, d))
    intercepts = np.empty((n_stored, k))
    factor_cov = np.empty((n_stored, d, d))

    out = 0
    for it in range(1, hyper.n_iterations + 1):
        try:
            update_theta(state, ws, gen)
            update_latent(state, ws, gen)
            update_factor_cov(state, ws, gen)
            update_intercepts(state, ws, gen)
            update_loadings(state, ws, gen)
        except Exception as exc:
            raise RuntimeError(
                f"chain {chain_id} failed at iteration {it}: {exc}"
            ) from exc
        past = it - hyper.n_burnin
        if past > 0 and (past - 1) % hyper.thin == 0:
            _check_draw(state, ws, it)
            theta[out] = state.theta
            loadings[out] = state.loadings
            intercepts[out] = state.intercepts
            factor_cov[out] = state.factor_cov
            out += 1
    assert out == n_stored
    return {
        "theta": theta,
        "loadings": loadings,
        "intercepts": intercepts,
        "factor_cov": factor_cov,
    }


def run_sampler(
    data: ResponseMatrix,
    constraints: ConstraintSet,
    hyper: Hyperparameters,
    anchor_dims="all",
    force: bool = False,
    n_jobs: int = 1,
    keep_anchors: bool = False,
) -> PosteriorDraws:
    """Fit the constrained model and return stored posterior draws.

    ``anchor_dims`` selects which dimensions receive anchor units ("all",
    an iterable of dimension indices, or None for no anchors). Runs
    ``hyper.n_chains`` chains on distinct random streams; chains may run in
    parallel (``n_jobs``) without changing the result. Raises
    IdentificationError when the constraints cannot pin rotation, unless
    ``force`` is set.
    """
    if constraints.n_items != data.n_items:
        raise ValueError(
            f"constraints cover {constraints.n_items} items, data has {data.n_items}"
        )
    use_anchors = anchor_dims is not None and (
        isinstance(anchor_dims, str) or len(tuple(anchor_dims)) > 0
    )
    report = validate_identification(constraints, use_anchors=use_anchors)
    if not report.ok and not force:
        raise IdentificationError(report)

    d = constraints.n_factors
    hyper = hyper.resolve(d)
    n = data.n_units
    if use_anchors:
        aug = augment_with_anchors(data, constraints, hyper.anchor_scale, anchor_dims)
        values = aug.data.values
        unit_ids = aug.data.unit_ids
        fixed_mask, fixed_values = aug.fixed_mask, aug.fixed_values
        anchor_rows = aug.anchor_rows
    else:
        values = data.values
        unit_ids = data.unit_ids
        fixed_mask = np.zeros((n, d), dtype=bool)
        fixed_values = np.zeros((n, d))
        anchor_rows = ()
    real_rows = np.ones(values.shape[0], dtype=bool)
    real_rows[list(anchor_rows)] = False

    ws = make_workspace(values, constraints.codes, hyper, fixed_mask, fixed_values, real_rows)

    chain_ids = list(range(hyper.n_chains))
    if n_jobs == 1 or hyper.n_chains == 1:
        results = [run_chain(ws, c) for c in chain_ids]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(run_chain)(ws, c) for c in chain_ids)

    config_digest = stable_digest(
        {
            "hyper": hyper.digest_fields(),
            "codes": constraints.codes,
            "data": data.values,
            "anchor_dims": "all" if anchor_dims == "all" else sorted(
                int(j) for j in (anchor_dims or ())
            ),
        }
    )
    draws = PosteriorDraws(
        theta=np.stack([r["theta"] for r in results]),
        loadings=np.stack([r["loadings"] for r in results]),
        intercepts=np.stack([r["intercepts"] for r in results]),
        factor_cov=np.stack([r["factor_cov"] for r in results]),
        unit_ids=tuple(unit_ids),
        item_ids=tuple(data.item_ids),
        dimension_names=tuple(constraints.dimension_names),
        hyper=hyper,
        constraints_digest=constraints.digest(),
        config_digest=config_digest,
    )
    if keep_anchors:
        return draws
    return strip_anchors(draws, anchor_rows)
