"""Domain types: response data, constraint codes, hyperparameters, state.

Also houses the identification check and the mapping from a constraint
code to the prior it induces on a loading. A code of 0 excludes a loading
entirely, a signed code c restricts the loading to that sign with prior
variance c**2, and a missing code (NaN) leaves the loading unconstrained
with a standard normal prior. Codes and missing responses are distinct
concepts: a missing code is a prior statement, a missing response is data.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .sampling import truncated_normal

__all__ = [
    "ConstraintSet",
    "Hyperparameters",
    "IdentificationReport",
    "ParameterState",
    "PosteriorDraws",
    "PriorSpec",
    "ResponseMatrix",
    "ValidationError",
    "loading_prior",
    "stable_digest",
    "validate_identification",
]


class ValidationError(ValueError):
    """Input data violated a structural contract."""


def _as_float_matrix(values, what):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{what} must be two-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ResponseMatrix:
    """N x K binary responses with missingness encoded as NaN.

    Rows are data units, columns are dichotomous choices.
    """

    values: np.ndarray
    unit_ids: tuple[str, ...] = ()
    item_ids: tuple[str, ...] = ()

    def __post_init__(self):
        arr = _as_float_matrix(self.values, "response matrix")
        n, k = arr.shape
        if n < 1 or k < 1:
            raise ValidationError("response matrix must have at least one row and column")
        finite = arr[~np.isnan(arr)]
        if not np.all((finite == 0.0) | (finite == 1.0)):
            bad = finite[(finite != 0.0) & (finite != 1.0)][0]
            raise ValidationError(f"responses must be 0, 1, or missing; found {bad!r}")
        unit_ids = tuple(self.unit_ids) or tuple(f"unit{i}" for i in range(n))
        item_ids = tuple(self.item_ids) or tuple(f"item{j}" for j in range(k))
        if len(unit_ids) != n:
            raise ValidationError(f"expected {n} unit ids, got {len(unit_ids)}")
        if len(item_ids) != k:
            raise ValidationError(f"expected {k} item ids, got {len(item_ids)}")
        all_missing = np.isnan(arr).all(axis=0)
        if all_missing.any():
            cols = [item_ids[j] for j in np.nonzero(all_missing)[0]]
            warnings.warn(
                f"columns with no observed responses carry no information: {cols}",
                stacklevel=2,
            )
        object.__setattr__(self, "values", arr.copy())
        object.__setattr__(self, "unit_ids", unit_ids)
        object.__setattr__(self, "item_ids", item_ids)

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ConstraintSet:
    """K x d table of constraint codes, one row per item, NaN = no prior."""

    codes: np.ndarray
    dimension_names: tuple[str, ...] = ()
    item_ids: tuple[str, ...] = ()

    def __post_init__(self):
        arr = _as_float_matrix(self.codes, "constraint codes")
        k, d = arr.shape
        if d < 1:
            raise ValidationError("constraint table needs at least one dimension")
        if np.any(np.isinf(arr)):
            raise ValidationError("constraint codes must be finite or missing")
        names = tuple(self.dimension_names) or tuple(f"dim{j}" for j in range(d))
        if len(names) != d:
            raise ValidationError(f"expected {d} dimension names, got {len(names)}")
        item_ids = tuple(self.item_ids)
        if item_ids and len(item_ids) != k:
            raise ValidationError(f"expected {k} item ids, got {len(item_ids)}")
        object.__setattr__(self, "codes", arr.copy())
        object.__setattr__(self, "dimension_names", names)
        object.__setattr__(self, "item_ids", item_ids)

    @property
    def n_items(self) -> int:
        return self.codes.shape[0]

    @property
    def n_factors(self) -> int:
        return self.codes.shape[1]

    @classmethod
    def unconstrained(cls, n_items: int, n_factors: int) -> "ConstraintSet":
        """All codes missing: every loading gets a standard normal prior."""
        return cls(np.full((n_items, n_factors), np.nan))

    def digest(self) -> str:
        return stable_digest({"codes": self.codes, "dims": self.dimension_names})


@dataclass(frozen=True)
class PriorSpec:
    """Prior induced on one loading by its constraint code."""

    kind: str  # "point_mass" | "half_normal" | "normal"
    variance: float
    lower: float
    upper: float

    def sample(self, rng, size=None):
        if self.kind == "point_mass":
            return 0.0 if size is None else np.zeros(size)
        return truncated_normal(
            rng, 0.0, np.sqrt(self.variance), self.lower, self.upper, size=size
        )


def loading_prior(code) -> PriorSpec:
    """Map one constraint code to the prior on its loading.

    0 pins the loading at zero; a signed code c gives a half normal on the
    matching side with variance c**2; a missing code gives N(0, 1).
    """
    if code is None or (isinstance(code, float) and np.isnan(code)) or (
        isinstance(code, np.floating) and np.isnan(code)
    ):
        return PriorSpec("normal", 1.0, -np.inf, np.inf)
    code = float(code)
    if not np.isfinite(code):
        raise ValidationError(f"constraint code must be finite or missing, got {code}")
    if code == 0.0:
        return PriorSpec("point_mass", 0.0, 0.0, 0.0)
    if code > 0:
        return PriorSpec("half_normal", code**2, 0.0, np.inf)
    return PriorSpec("half_normal", code**2, -np.inf, 0.0)


@dataclass(frozen=True)
class IdentificationReport:
    """Outcome of the rotation-identification bookkeeping.

    The model needs at least d(d-1) constraints; exclusion codes count one
    each and every anchorable dimension contributes two anchor points.
    """

    n_factors: int
    zero_count: int
    anchorable_dims: tuple[int, ...]
    anchors_counted: int
    total: int
    required: int
    status: str  # "ok" | "underidentified"
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def describe(self) -> str:
        lines = [
            f"required constraints : {self.required} (= d(d-1), d={self.n_factors})",
            f"exclusion codes      : {self.zero_count}",
            f"anchorable dims      : {list(self.anchorable_dims)}",
            f"anchor constraints   : {self.anchors_counted}",
            f"total                : {self.total}",
            f"status               : {self.status.upper()}",
        ]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate_identification(constraints: ConstraintSet, use_anchors: bool) -> IdentificationReport:
    """Count identification constraints supplied by codes and anchors.

    Pure; never mutates its inputs. A dimension is anchorable iff at least
    one of its codes is signed (finite and nonzero).
    """
    codes = constraints.codes
    d = constraints.n_factors
    zero_count = int((codes == 0.0).sum())
    signed = np.isfinite(codes) & (codes != 0.0)
    anchorable = tuple(int(j) for j in range(d) if signed[:, j].any())
    anchors_counted = 2 * len(anchorable) if use_anchors else 0
    total = zero_count + anchors_counted
    required = d * (d - 1)
    warn: list[str] = []
    if use_anchors and len(anchorable) < d:
        missing = [constraints.dimension_names[j] for j in range(d) if j not in anchorable]
        warn.append(f"dimensions without signed codes cannot be anchored: {missing}")
    all_na = np.isnan(codes).all(axis=0)
    if all_na.any():
        names = [constraints.dimension_names[j] for j in np.nonzero(all_na)[0]]
        warn.append(f"dimensions with no coded items: {names}")
    status = "ok" if total >= required else "underidentified"
    return IdentificationReport(
        n_factors=d,
        zero_count=zero_count,
        anchorable_dims=anchorable,
        anchors_counted=anchors_counted,
        total=total,
        required=required,
        status=status,
        warnings=tuple(warn),
    )


@dataclass(frozen=True)
class Hyperparameters:
    """Sampler configuration. ``nu0``/``scale_matrix`` default to d and I."""

    nu0: float | None = None
    scale_matrix: np.ndarray | None = None
    anchor_scale: float = 4.0
    n_iterations: int = 3000
    n_burnin: int = 2000
    thin: int = 1
    n_chains: int = 2
    correlated_factors: bool = True
    inner_tmvn_sweeps: int = 5
    seed: int = 0
    sigma_normalization: str = "symmetric"  # or "row" (as literally stated)

    def __post_init__(self):
        if self.n_burnin >= self.n_iterations:
            raise ValidationError("n_burnin must be smaller than n_iterations")
        if self.thin < 1:
            raise ValidationError("thin must be at least 1")
        if self.anchor_scale <= 0:
            raise ValidationError("anchor_scale must be positive")
        if self.n_chains < 1:
            raise ValidationError("need at least one chain")
        if self.inner_tmvn_sweeps < 1:
            raise ValidationError("inner_tmvn_sweeps must be at least 1")
        if self.sigma_normalization not in ("symmetric", "row"):
            raise ValidationError("sigma_normalization must be 'symmetric' or 'row'")

    def resolve(self, n_factors: int) -> "Hyperparameters":
        """Fill dimension-dependent defaults and check them."""
        nu0 = float(self.nu0) if self.nu0 is not None else float(n_factors)
        scale = (
            np.asarray(self.scale_matrix, dtype=float)
            if self.scale_matrix is not None
            else np.eye(n_factors)
        )
        if scale.shape != (n_factors, n_factors):
            raise ValidationError(
                f"scale_matrix must be {n_factors}x{n_factors}, got {scale.shape}"
            )
        if not nu0 > n_factors - 1:
            raise ValidationError(f"nu0 must exceed d - 1 = {n_factors - 1}, got {nu0}")
        return replace(self, nu0=nu0, scale_matrix=scale)

    @property
    def n_stored(self) -> int:
        kept = self.n_iterations - self.n_burnin
        return (kept + self.thin - 1) // self.thin

    def digest_fields(self) -> dict:
        return {
            "nu0": self.nu0,
            "scale_matrix": self.scale_matrix,
            "anchor_scale": self.anchor_scale,
            "n_iterations": self.n_iterations,
            "n_burnin": self.n_burnin,
            "thin": self.thin,
            "n_chains": self.n_chains,
            "correlated_factors": self.correlated_factors,
            "inner_tmvn_sweeps": self.inner_tmvn_sweeps,
            "seed": self.seed,
            "sigma_normalization": self.sigma_normalization,
        }


@dataclass
class ParameterState:
    """One Gibbs iteration's parameter values, owned by a single chain.

    ``theta`` includes anchor rows; coordinates flagged in ``fixed_mask``
    hold their ``fixed_values`` exactly in every iteration.
    """

    theta: np.ndarray  # (N', d)
    loadings: np.ndarray  # (K, d)
    intercepts: np.ndarray  # (K,)
    ystar: np.ndarray  # (N', K) latent responses
    factor_cov: np.ndarray  # (d, d)
    fixed_mask: np.ndarray  # (N', d) bool
    fixed_values: np.ndarray  # (N', d)

    def check(self, codes: np.ndarray, correlated: bool, atol: float = 1e-9) -> None:
        """Raise if a structural invariant is violated (used in tests)."""
        lam = self.loadings
        if not np.all(lam[codes == 0.0] == 0.0):
            raise AssertionError("zero-coded loadings must be exactly zero")
        pos = np.isfinite(codes) & (codes > 0)
        neg = np.isfinite(codes) & (codes < 0)
        if not np.all(lam[pos] >= 0.0) or not np.all(lam[neg] <= 0.0):
            raise AssertionError("signed loading violates its code")
        if not np.all(self.theta[self.fixed_mask] == self.fixed_values[self.fixed_mask]):
            raise AssertionError("fixed latent coordinate drifted")
        cov = self.factor_cov
        if correlated:
            if not np.allclose(np.diag(cov), 1.0, atol=atol):
                raise AssertionError("factor covariance must have unit diagonal")
            if not np.allclose(cov, cov.T, atol=atol):
                raise AssertionError("factor covariance must be symmetric")
        else:
            if not np.array_equal(cov, np.eye(cov.shape[0])):
                raise AssertionError("factor covariance must stay identity")


@dataclass(frozen=True)
class PosteriorDraws:
    """Stored post-burn-in draws, one block per chain.

    Shapes: theta (chains, draws, N, d), loadings (chains, draws, K, d),
    intercepts (chains, draws, K), factor_cov (chains, draws, d, d).
    Anchor rows are removed before the draws reach callers.
    """

    theta: np.ndarray
    loadings: np.ndarray
    intercepts: np.ndarray
    factor_cov: np.ndarray
    unit_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    dimension_names: tuple[str, ...]
    hyper: Hyperparameters
    constraints_digest: str = ""
    config_digest: str = ""

    @property
    def n_chains(self) -> int:
        return self.theta.shape[0]

    @property
    def n_draws(self) -> int:
        return self.theta.shape[1]

    def pooled(self, name: str) -> np.ndarray:
        """All chains concatenated along the draw axis."""
        arr = getattr(self, name)
        return arr.reshape((-1,) + arr.shape[2:])

    def theta_mean(self) -> np.ndarray:
        return self.pooled("theta").mean(axis=0)

    def loadings_mean(self) -> np.ndarray:
        return self.pooled("loadings").mean(axis=0)

    def intercepts_mean(self) -> np.ndarray:
        return self.pooled("intercepts").mean(axis=0)

    def factor_cov_mean(self) -> np.ndarray:
        return self.pooled("factor_cov").mean(axis=0)


def _digest_normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _digest_normalize(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_digest_normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return {
            "shape": list(obj.shape),
            "sha": hashlib.sha256(np.ascontiguousarray(obj).tobytes()).hexdigest(),
        }
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and np.isnan(obj):
        return "nan"
    return obj


def stable_digest(obj) -> str:
    """Deterministic SHA-256 digest of a nested config structure."""
    payload = json.dumps(_digest_normalize(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
