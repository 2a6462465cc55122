"""Synthetic data generation, code misspecification, benchmark grid runner.

Data sets are drawn from the generative model itself: a correlation-form
factor covariance from the inverse-Wishart prior, latent positions from
the resulting multivariate normal, loadings from their coded priors,
standard normal intercepts, and probit responses. A repair pass keeps the
drawn code tables identifiable (enough exclusion codes, and at least one
signed code per dimension so anchors exist).

Every benchmark task derives its own random stream from the design seed
and the task labels, so results are independent of worker count and the
same data set is shared by all methods and misspecification levels of a
given (cell, replicate).
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .baselines import fit_pca, fit_unconstrained_irt
from .diagnostics import ci_coverage, ess_rank_normalized, geweke_z, mse_theta, split_rhat
from .gibbs import run_sampler
from .model import ConstraintSet, Hyperparameters, ParameterState, ResponseMatrix
from .sampling import RngStream, as_generator, inverse_wishart, multivariate_normal

__all__ = [
    "BenchmarkRow",
    "SimDesign",
    "aggregate_benchmark",
    "generate_dataset",
    "misspecify",
    "run_benchmark",
]

METHODS = ("irtm-corr", "irtm-uncorr", "irt", "pca")


@dataclass(frozen=True)
class SimDesign:
    """Benchmark grid: cells are the product of the three size tuples."""

    n_units: tuple[int, ...] = (50, 100)
    n_items: tuple[int, ...] = (50, 100)
    n_factors: tuple[int, ...] = (2, 3)
    n_replicates: int = 20
    code_distribution: tuple[float, float, float] = (0.3, 0.3, 0.4)  # P(+1), P(-1), P(0)
    misspecification_fractions: tuple[float, ...] = (0.0,)
    methods: tuple[str, ...] = METHODS
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    missing_fraction: float = 0.0
    ensure_zero_identification: bool = True
    repair_codes: bool = True
    seed: int = 0

    def __post_init__(self):
        if not math.isclose(sum(self.code_distribution), 1.0, abs_tol=1e-9):
            raise ValueError("code_distribution probabilities must sum to 1")
        if any(p < 0 for p in self.code_distribution):
            raise ValueError("code_distribution probabilities must be nonnegative")
        fr = tuple(self.misspecification_fractions)
        if list(fr) != sorted(fr):
            raise ValueError("misspecification_fractions must be sorted ascending")
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise ValueError("misspecification fractions must lie in [0, 1]")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")

    @property
    def cells(self) -> list[tuple[int, int, int]]:
        return [
            (n, k, d)
            for n in self.n_units
            for k in self.n_items
            for d in self.n_factors
        ]


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary labels."""
    payload = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _draw_codes(rng, n_items: int, d: int, design: SimDesign) -> np.ndarray:
    values = np.array([1.0, -1.0, 0.0])
    codes = rng.choice(values, size=(n_items, d), p=list(design.code_distribution))
    if not design.repair_codes:
        return codes
    required = d * (d - 1) if design.ensure_zero_identification else 0
    if n_items * d < required + d:
        raise ValueError(
            f"cannot build an identifiable code table: K*d = {n_items * d} "
            f"< {required + d} required entries"
        )
    # every dimension needs one signed code so an anchor exists
    for j in range(d):
        if not np.any(codes[:, j] != 0.0):
            row = int(rng.integers(n_items))
            codes[row, j] = rng.choice([1.0, -1.0])
    # top up exclusion codes without orphaning a dimension
    while int((codes == 0.0).sum()) < required:
        signed_per_dim = (codes != 0.0).sum(axis=0)
        rows, cols = np.nonzero((codes != 0.0) & (signed_per_dim[None, :] >= 2))
        if rows.size == 0:
            raise ValueError("cannot reach the required exclusion-code count")
        pick = int(rng.integers(rows.size))
        codes[rows[pick], cols[pick]] = 0.0
    return codes


def generate_dataset(
    cell: tuple[int, int, int], design: SimDesign, rng
) -> tuple[ResponseMatrix, ParameterState, ConstraintSet]:
    """Draw one synthetic data set plus its generating parameters."""
    gen = as_generator(rng)
    n, k, d = cell
    hyper = design.hyper.resolve(d)

    codes = _draw_codes(gen, k, d, design)
    cov_draw = inverse_wishart(gen, hyper.nu0, hyper.scale_matrix)
    s = np.sqrt(np.diag(cov_draw))
    factor_cov = cov_draw / np.outer(s, s)
    np.fill_diagonal(factor_cov, 1.0)

    theta = multivariate_normal(gen, np.zeros(d), factor_cov, size=n)

    z = gen.standard_normal((k, d))
    loadings = np.zeros((k, d))
    pos = codes > 0
    neg = codes < 0
    loadings[pos] = np.abs(z[pos]) * codes[pos]
    loadings[neg] = -np.abs(z[neg]) * np.abs(codes[neg])
    na = np.isnan(codes)
    loadings[na] = z[na]

    intercepts = gen.standard_normal(k)
    utilities = theta @ loadings.T + intercepts[None, :] + gen.standard_normal((n, k))
    values = (utilities > 0).astype(float)
    if design.missing_fraction > 0:
        mask = gen.random((n, k)) < design.missing_fraction
        values[mask] = np.nan

    truth = ParameterState(
        theta=theta,
        loadings=loadings,
        intercepts=intercepts,
        ystar=utilities,
        factor_cov=factor_cov,
        fixed_mask=np.zeros((n, d), dtype=bool),
        fixed_values=np.zeros((n, d)),
    )
    return ResponseMatrix(values), truth, ConstraintSet(codes)


def misspecify(constraints: ConstraintSet, fraction: float, rng) -> ConstraintSet:
    """Alter ceil(fraction * K * d) code entries, each to a different value.

    Replacement values come from {+1, -1, 0}; anchors built downstream are
    regenerated from the altered table automatically.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    codes = constraints.codes.copy()
    total = codes.size
    n_alter = math.ceil(fraction * total)
    if n_alter == 0:
        return constraints
    gen = as_generator(rng)
    chosen = gen.choice(total, size=n_alter, replace=False)
    flat = codes.ravel()
    palette = np.array([1.0, -1.0, 0.0])
    for idx in chosen:
        old = flat[idx]
        options = palette[palette != old] if not np.isnan(old) else palette
        flat[idx] = gen.choice(options)
    return ConstraintSet(
        flat.reshape(codes.shape), constraints.dimension_names, constraints.item_ids
    )


@dataclass(frozen=True)
class BenchmarkRow:
    """Metrics for one completed (cell, fraction, method, replicate) run."""

    n_units: int
    n_items: int
    n_factors: int
    fraction: float
    method: str
    replicate: int
    mse_theta: float = float("nan")
    mse_loadings: float = float("nan")
    coverage_theta: float = float("nan")
    coverage_loadings: float = float("nan")
    ess_theta: float = float("nan")
    rhat_theta: float = float("nan")
    geweke_rejection_rate: float = float("nan")
    wall_time: float = float("nan")
    error: str = ""


def _mcmc_metrics(draws, truth: ParameterState) -> dict:
    import warnings as _warnings

    from .diagnostics import DegenerateChainWarning

    theta_draws = draws.pooled("theta")
    lam_draws = draws.pooled("loadings")
    out = {
        "mse_theta": mse_theta(draws.theta_mean(), truth.theta),
        "mse_loadings": mse_theta(draws.loadings_mean(), truth.loadings),
        "coverage_theta": ci_coverage(theta_draws, truth.theta),
        "coverage_loadings": ci_coverage(lam_draws, truth.loadings),
    }
    n_units, d = truth.theta.shape
    ess = np.empty((n_units, d))
    rhat = np.empty((n_units, d))
    reject = np.empty((n_units, d))
    first_chain = draws.theta[0]
    with _warnings.catch_warnings():
        # anchor-duplicate units have pinned coordinates; their constant
        # chains are expected and excluded from the convergence summaries
        _warnings.simplefilter("ignore", DegenerateChainWarning)
        for i in range(n_units):
            for j in range(d):
                coord = draws.theta[:, :, i, j]
                constant = bool(np.all(coord == coord.ravel()[0]))
                ess[i, j] = np.nan if constant else ess_rank_normalized(coord)
                rhat[i, j] = split_rhat(coord)
                _, p = geweke_z(first_chain[:, i, j])
                reject[i, j] = p < 0.05
    out["ess_theta"] = float(np.nanmean(ess))
    out["rhat_theta"] = float(np.nanmedian(rhat))
    out["geweke_rejection_rate"] = float(np.mean(reject))
    return out


def run_task(
    design: SimDesign, cell: tuple[int, int, int], fraction: float, method: str, replicate: int
) -> BenchmarkRow:
    """Generate, fit, and score one benchmark run; failures become tagged rows."""
    n, k, d = cell
    label = dict(
        n_units=n, n_items=k, n_factors=d, fraction=fraction, method=method, replicate=replicate
    )
    start = time.perf_counter()
    try:
        gen_stream = RngStream(derive_seed(design.seed, "gen", cell, replicate), 0)
        data, truth, codes_true = generate_dataset(cell, design, gen_stream)
        if fraction > 0.0:
            mis_stream = RngStream(
                derive_seed(design.seed, "mis", cell, replicate, fraction), 0
            )
            codes_fit = misspecify(codes_true, fraction, mis_stream)
        else:
            codes_fit = codes_true
        fit_seed = derive_seed(design.seed, "fit", cell, replicate, fraction, method)
        hyper = replace(design.hyper, seed=fit_seed)

        if method == "pca":
            result = fit_pca(data, d)
            metrics = {
                "mse_theta": mse_theta(result.scores, truth.theta),
                "mse_loadings": mse_theta(result.components, truth.loadings),
            }
        elif method == "irt":
            draws = fit_unconstrained_irt(data, d, hyper)
            metrics = _mcmc_metrics(draws, truth)
        elif method in ("irtm-corr", "irtm-uncorr"):
            hyper = replace(hyper, correlated_factors=(method == "irtm-corr"))
            draws = run_sampler(data, codes_fit, hyper, anchor_dims="all", force=True)
            metrics = _mcmc_metrics(draws, truth)
        else:
            raise ValueError(f"unknown method {method!r}")
        return BenchmarkRow(**label, **metrics, wall_time=time.perf_counter() - start)
    except Exception as exc:  # per-run failures must never sink the grid
        return BenchmarkRow(**label, wall_time=time.perf_counter() - start, error=str(exc))


def run_benchmark(design: SimDesign, n_jobs: int = 1, verbose: int = 0) -> list[BenchmarkRow]:
    """Run the full grid; rows are reproducible from (design, seed) exactly."""
    tasks = [
        (cell, fraction, method, rep)
        for cell in design.cells
        for fraction in design.misspecification_fractions
        for method in design.methods
        for rep in range(design.n_replicates)
    ]
    if n_jobs == 1:
        return [run_task(design, *task) for task in tasks]
    rows = Parallel(n_jobs=n_jobs, verbose=verbose)(
        delayed(run_task)(design, *task) for task in tasks
    )
    return list(rows)


def aggregate_benchmark(rows: list[BenchmarkRow]) -> list[dict]:
    """Mean metrics over successful replicates per (cell, fraction, method)."""
    groups: dict[tuple, list[BenchmarkRow]] = {}
    for row in rows:
        key = (row.n_units, row.n_items, row.n_factors, row.fraction, row.method)
        groups.setdefault(key, []).append(row)
    out = []
    metric_names = (
        "mse_theta",
        "mse_loadings",
        "coverage_theta",
        "coverage_loadings",
        "ess_theta",
        "rhat_theta",
        "geweke_rejection_rate",
    )
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3], k[4])):
        rows_k = groups[key]
        ok = [r for r in rows_k if not r.error]
        entry = {
            "n_units": key[0],
            "n_items": key[1],
            "n_factors": key[2],
            "fraction": key[3],
            "method": key[4],
            "n_runs": len(rows_k),
            "n_ok": len(ok),
        }
        for name in metric_names:
            vals = [getattr(r, name) for r in ok]
            entry[name] = float(np.mean(vals)) if vals else float("nan")
        out.append(entry)
    return out
