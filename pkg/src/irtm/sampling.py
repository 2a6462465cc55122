"""Random-variate primitives used by the Gibbs machinery.

Truncated univariate and multivariate normal draws, plain multivariate
normal draws, inverse-Wishart draws, and the standard normal CDF. Every
sampler is a pure function of its inputs and an explicit RNG, so callers
may run them concurrently as long as each worker owns a distinct stream.

Truncated normal draws use inverse-CDF sampling in central regions and an
exponential-rejection scheme in far tails, so they stay accurate even when
the truncation region sits many standard deviations from the mean (naive
accept-reject would stall there).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.special import ndtr, ndtri

__all__ = [
    "DecompositionError",
    "RngStream",
    "TruncationBounds",
    "as_generator",
    "inverse_wishart",
    "multivariate_normal",
    "normal_cdf",
    "truncated_mvn",
    "truncated_normal",
]

# standardized bound beyond which a truncation region counts as "far tail"
_TAIL = 4.0
# rejection loops have acceptance probability bounded well away from zero;
# hitting this cap indicates a bug, not bad luck
_MAX_REJECTION_SWEEPS = 500


class DecompositionError(np.linalg.LinAlgError):
    """A matrix that must be symmetric positive-definite is not."""


@dataclass
class RngStream:
    """Reproducible, named random stream.

    Identical ``(seed, stream_id)`` pairs reproduce identical draw
    sequences bit for bit on a given platform. Distinct stream ids give
    statistically independent streams off the same seed.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        self._generator: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        """The underlying numpy generator; created lazily, then stateful."""
        if self._generator is None:
            seq = np.random.SeedSequence(
                entropy=int(self.seed), spawn_key=(int(self.stream_id),)
            )
            self._generator = np.random.default_rng(seq)
        return self._generator


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, Generator, or integer seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    raise TypeError(f"cannot interpret {type(rng).__name__} as a random generator")


@dataclass(frozen=True)
class TruncationBounds:
    """Per-dimension truncation interval(s), closed under +/- infinity.

    A dimension with ``lower == upper`` denotes a point mass at that value.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("truncation bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("invalid truncation bounds: lower > upper")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def unbounded(cls, d: int) -> "TruncationBounds":
        return cls(np.full(d, -np.inf), np.full(d, np.inf))

    @property
    def point_mass(self) -> np.ndarray:
        return self.lower == self.upper


def normal_cdf(x):
    """Standard normal CDF, accurate to well below 1e-12."""
    out = ndtr(x)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def _tail_draw(rng, alpha, beta):
    """Draw standard normal variates conditioned on [alpha, beta], alpha >= _TAIL.

    Wide or one-sided intervals use an exponential proposal with rate
    (alpha + sqrt(alpha^2 + 4)) / 2; very narrow intervals fall back to a
    uniform proposal. Both keep acceptance bounded below.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    out = np.empty_like(alpha)
    narrow = np.isfinite(beta) & ((beta - alpha) * alpha < 0.5)

    idx = np.nonzero(~narrow)[0]
    a, b = alpha[idx], beta[idx]
    rate = 0.5 * (a + np.sqrt(a * a + 4.0))
    vals = np.empty_like(a)
    todo = np.ones(a.shape, dtype=bool)
    for _ in range(_MAX_REJECTION_SWEEPS):
        if not todo.any():
            break
        n = int(todo.sum())
        z = a[todo] + rng.exponential(size=n) / rate[todo]
        accept = rng.random(n) <= np.exp(-0.5 * (z - rate[todo]) ** 2)
        accept &= z <= b[todo]
        pos = np.nonzero(todo)[0][accept]
        vals[pos] = z[accept]
        todo[pos] = False
    else:
        raise RuntimeError("tail rejection sampler failed to terminate")
    out[idx] = vals

    idx = np.nonzero(narrow)[0]
    a, b = alpha[idx], beta[idx]
    vals = np.empty_like(a)
    todo = np.ones(a.shape, dtype=bool)
    for _ in range(_MAX_REJECTION_SWEEPS):
        if not todo.any():
            break
        n = int(todo.sum())
        z = a[todo] + (b[todo] - a[todo]) * rng.random(n)
        accept = rng.random(n) <= np.exp(0.5 * (a[todo] ** 2 - z * z))
        pos = np.nonzero(todo)[0][accept]
        vals[pos] = z[accept]
        todo[pos] = False
    else:
        raise RuntimeError("tail rejection sampler failed to terminate")
    out[idx] = vals
    return out


def _tn_standardized(gen, a, b):
    """Standard-normal draws restricted to [a, b]; flat same-shape arrays."""
    z = np.zeros(a.shape)
    point = a == b
    has_point = point.any()
    plain = np.isneginf(a) & np.isposinf(b)
    if has_point:
        plain &= ~point
    n_plain = int(plain.sum())
    if n_plain == z.size:
        return gen.standard_normal(a.shape), point
    if n_plain:
        z[plain] = gen.standard_normal(n_plain)
    rest = ~plain
    if has_point:
        rest &= ~point
    if rest.any():
        aa = a[rest]
        bb = b[rest]
        # canonicalize so the interval sits in the lower half or straddles 0
        flip = aa > 0
        flipped = flip.any()
        if flipped:
            aa, bb = np.where(flip, -bb, aa), np.where(flip, -aa, bb)
        tail = bb <= -_TAIL
        if tail.any():
            zr = np.empty_like(aa)
            # interval in the far lower tail: reflect, sample the upper tail
            zr[tail] = -_tail_draw(gen, -bb[tail], -aa[tail])
            central = ~tail
            if central.any():
                ua = ndtr(aa[central])
                ub = ndtr(bb[central])
                zr[central] = ndtri(ua + (ub - ua) * gen.random(int(central.sum())))
        else:
            ua = ndtr(aa)
            ub = ndtr(bb)
            zr = ndtri(ua + (ub - ua) * gen.random(aa.shape))
        if flipped:
            zr = np.where(flip, -zr, zr)
        z[rest] = zr
    return z, point


def truncated_normal(rng, mean=0.0, sd=1.0, lower=-np.inf, upper=np.inf, size=None):
    """Draw from a normal distribution restricted to ``[lower, upper]``.

    All arguments broadcast; ``size`` fixes the output shape. Dimensions
    with ``lower == upper`` return that value exactly (point mass). Returns
    a scalar when all inputs are scalar and ``size`` is None.

    Raises ValueError on ``sd <= 0`` or ``lower > upper``.
    """
    gen = as_generator(rng)
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if (sd <= 0).any():
        raise ValueError("sd must be positive")
    if (lower > upper).any():
        raise ValueError("invalid truncation bounds: lower > upper")

    shape = mean.shape
    aligned = size is None and sd.shape == shape and lower.shape == shape and upper.shape == shape
    if not aligned:
        shape = np.broadcast_shapes(mean.shape, sd.shape, lower.shape, upper.shape)
        if size is not None:
            shape = np.broadcast_shapes(shape, tuple(np.atleast_1d(size)))
        mean, sd, lower, upper = (
            np.broadcast_to(x, shape) for x in (mean, sd, lower, upper)
        )
    scalar_out = shape == () and size is None
    if shape == ():
        mean, sd, lower, upper = (x.reshape(1) for x in (mean, sd, lower, upper))

    a = (lower - mean) / sd
    b = (upper - mean) / sd
    z, point = _tn_standardized(gen, a, b)
    out = mean + sd * z
    # guard float roundoff; point-mass dims are exact by construction
    out = np.clip(out, lower, upper)
    if point.any():
        out[point] = lower[point]
    return float(out[0]) if scalar_out else out.reshape(shape)


def multivariate_normal(rng, mean, cov, size=None):
    """Draw from N(mean, cov) via Cholesky factorization.

    Raises DecompositionError when ``cov`` is not symmetric positive-definite.
    """
    gen = as_generator(rng)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.shape[-1]
    if cov.shape != (d, d):
        raise ValueError(f"covariance must be {d}x{d}, got {cov.shape}")
    chol = _cholesky_pd(cov, what="covariance")
    if size is None:
        return mean + chol @ gen.standard_normal(d)
    z = gen.standard_normal((int(size), d))
    return mean + z @ chol.T


def _cholesky_pd(mat, what="matrix"):
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise DecompositionError(f"{what} is not symmetric")
    try:
        return cholesky(mat, lower=True)
    except np.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(mat)
        raise DecompositionError(
            f"{what} is not positive-definite: eigenvalues in "
            f"[{eigs.min():.3e}, {eigs.max():.3e}]"
        ) from exc


def inverse_wishart(rng, df, scale):
    """Draw a symmetric PD matrix from the inverse-Wishart distribution.

    Uses the Bartlett decomposition of the corresponding Wishart draw.
    ``df`` may be any real value above ``d - 1``; the mean equals
    ``scale / (df - d - 1)`` when ``df > d + 1``.
    """
    gen = as_generator(rng)
    scale = np.asarray(scale, dtype=float)
    d = scale.shape[0]
    if scale.shape != (d, d):
        raise ValueError("scale must be square")
    if not df > d - 1:
        raise ValueError(f"degrees of freedom must exceed d - 1 = {d - 1}, got {df}")

    chol_scale = _cholesky_pd(scale, what="scale")
    inv_scale = cho_solve((chol_scale, True), np.eye(d))
    chol_inv = cholesky(inv_scale, lower=True)

    bartlett = np.zeros((d, d))
    for i in range(d):
        bartlett[i, i] = np.sqrt(gen.chisquare(df - i))
    if d > 1:
        rows, cols = np.tril_indices(d, k=-1)
        bartlett[rows, cols] = gen.standard_normal(rows.size)

    tri = chol_inv @ bartlett  # lower-triangular factor of the Wishart draw
    tri_inv = solve_triangular(tri, np.eye(d), lower=True)
    draw = tri_inv.T @ tri_inv
    return 0.5 * (draw + draw.T)


def _coerce_bounds(bounds, d):
    if isinstance(bounds, TruncationBounds):
        lo, hi = bounds.lower, bounds.upper
    else:
        lo, hi = bounds
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
    lo = np.broadcast_to(lo, (d,)).astype(float)
    hi = np.broadcast_to(hi, (d,)).astype(float)
    if np.any(lo > hi):
        raise ValueError("invalid truncation bounds: lower > upper")
    return lo, hi


def truncated_mvn(rng, mean, cov, bounds, n_sweeps=5, size=None, init=None):
    """Draw from a multivariate normal restricted to a box.

    Point-mass dimensions (``lower == upper``) are fixed at their value and
    conditioned out of the remaining distribution, which must then be
    positive-definite. Free dimensions with at least one finite bound are
    sampled by coordinate-wise Gibbs sweeps from the conditional truncated
    normals (``n_sweeps`` sweeps per call, warm-started at ``init`` or at
    the conditional mean clipped into the box); a fully unbounded free
    block is drawn exactly.

    With ``size=None`` returns one d-vector, otherwise a ``(size, d)``
    array of independent draws.
    """
    gen = as_generator(rng)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.shape[0]
    lo, hi = _coerce_bounds(bounds, d)

    n = 1 if size is None else int(size)
    fixed = lo == hi
    free = ~fixed
    out = np.empty((n, d))
    out[:, fixed] = lo[fixed]

    k = int(free.sum())
    if k == 0:
        return out[0] if size is None else out

    mean_f = mean[free]
    cov_ff = cov[np.ix_(free, free)]
    if fixed.any():
        cov_fc = cov[np.ix_(free, fixed)]
        cov_cc = cov[np.ix_(fixed, fixed)]
        sol = np.linalg.solve(cov_cc, lo[fixed] - mean[fixed])
        mean_f = mean_f + cov_fc @ sol
        cov_ff = cov_ff - cov_fc @ np.linalg.solve(cov_cc, cov_fc.T)
        cov_ff = 0.5 * (cov_ff + cov_ff.T)
    lo_f, hi_f = lo[free], hi[free]

    if np.all(np.isneginf(lo_f)) and np.all(np.isposinf(hi_f)):
        draws = multivariate_normal(gen, mean_f, cov_ff, size=n)
        out[:, free] = draws
        return out[0] if size is None else out

    chol = _cholesky_pd(cov_ff, what="covariance")
    prec = cho_solve((chol, True), np.eye(k))
    if init is None:
        x = np.broadcast_to(np.clip(mean_f, lo_f, hi_f), (n, k)).copy()
    else:
        init = np.asarray(init, dtype=float)[free]
        x = np.broadcast_to(np.clip(init, lo_f, hi_f), (n, k)).copy()

    diag = np.diag(prec)
    csd = 1.0 / np.sqrt(diag)
    for _ in range(int(n_sweeps)):
        for j in range(k):
            r = (x - mean_f) @ prec[:, j] - diag[j] * (x[:, j] - mean_f[j])
            cmean = mean_f[j] - r / diag[j]
            x[:, j] = truncated_normal(gen, cmean, csd[j], lo_f[j], hi_f[j])
    out[:, free] = x
    return out[0] if size is None else out
