"""Synthetic anchor units built from the constraint codes.

A positive anchor for dimension j answers "yes" to every item coded
positive on j, "no" to every item coded negative on j, leaves the rest
missing, and has its j-th latent coordinate pinned at +D. The negative
anchor flips both the responses and the sign of D. Two anchors per
dimension resolve rotation and sign and set the scale of the latent
space; they are appended before sampling and stripped from the output.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ConstraintSet, PosteriorDraws, ResponseMatrix

__all__ = [
    "Anchor",
    "AnchorUnavailableError",
    "AugmentedData",
    "augment_with_anchors",
    "make_anchor",
    "strip_anchors",
]


class AnchorUnavailableError(ValueError):
    """No signed code exists for the requested dimension."""


@dataclass(frozen=True)
class Anchor:
    responses: np.ndarray  # (K,) over {0, 1, NaN}
    fixed_theta: np.ndarray  # (d,), NaN where unfixed
    dim: int
    sign: int
    label: str


def make_anchor(constraints: ConstraintSet, dim: int, sign: int, scale: float) -> Anchor:
    """Build one anchor unit for ``dim`` with its coordinate fixed at sign*scale."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if scale <= 0:
        raise ValueError("anchor scale must be positive")
    codes = constraints.codes[:, dim]
    pos = np.isfinite(codes) & (codes > 0)
    neg = np.isfinite(codes) & (codes < 0)
    if not (pos.any() or neg.any()):
        name = constraints.dimension_names[dim]
        raise AnchorUnavailableError(f"dimension {name!r} has no signed codes to anchor on")
    responses = np.full(constraints.n_items, np.nan)
    responses[pos] = 1.0 if sign > 0 else 0.0
    responses[neg] = 0.0 if sign > 0 else 1.0
    fixed = np.full(constraints.n_factors, np.nan)
    fixed[dim] = sign * scale
    tag = "+" if sign > 0 else "-"
    label = f"anchor:{tag}{constraints.dimension_names[dim]}"
    return Anchor(responses=responses, fixed_theta=fixed, dim=dim, sign=sign, label=label)


@dataclass(frozen=True)
class AugmentedData:
    """Response matrix with anchor rows appended plus the fixing bookkeeping."""

    data: ResponseMatrix
    fixed_mask: np.ndarray  # (N', d) bool
    fixed_values: np.ndarray  # (N', d)
    anchor_rows: tuple[int, ...]
    duplicate_report: tuple[dict, ...]

    @property
    def n_anchors(self) -> int:
        return len(self.anchor_rows)


def _resolve_dims(constraints: ConstraintSet, which) -> tuple[list[int], bool]:
    """Return (dims, explicit). ``"all"`` keeps only anchorable dimensions."""
    d = constraints.n_factors
    if which is None:
        return [], False
    if isinstance(which, str):
        if which != "all":
            raise ValueError(f"unknown anchor selection {which!r}")
        signed = np.isfinite(constraints.codes) & (constraints.codes != 0.0)
        return [j for j in range(d) if signed[:, j].any()], False
    dims = []
    for j in which:
        j = int(j)
        if not 0 <= j < d:
            raise ValueError(f"anchor dimension {j} out of range for d={d}")
        dims.append(j)
    return sorted(set(dims)), True


def augment_with_anchors(
    data: ResponseMatrix,
    constraints: ConstraintSet,
    scale: float,
    which="all",
) -> AugmentedData:
    """Append two anchors per selected dimension and fix matching real units.

    ``which`` is "all" (every anchorable dimension), an iterable of
    dimension indices (missing signed codes then raise), or None/empty for
    a no-op. A real unit whose responses coincide with an anchor's pattern
    on the anchor's observed items gets the same fixed coordinate.
    """
    if constraints.n_items != data.n_items:
        raise ValueError(
            f"constraints cover {constraints.n_items} items, data has {data.n_items}"
        )
    dims, explicit = _resolve_dims(constraints, which)
    n, k = data.values.shape
    d = constraints.n_factors

    anchors: list[Anchor] = []
    for j in dims:
        try:
            anchors.append(make_anchor(constraints, j, +1, scale))
            anchors.append(make_anchor(constraints, j, -1, scale))
        except AnchorUnavailableError:
            if explicit:
                raise
    total = n + len(anchors)
    values = np.vstack([data.values] + [a.responses[None, :] for a in anchors]) if anchors else data.values.copy()
    unit_ids = list(data.unit_ids) + [a.label for a in anchors]

    fixed_mask = np.zeros((total, d), dtype=bool)
    fixed_values = np.zeros((total, d))
    duplicates: list[dict] = []
    for offset, anchor in enumerate(anchors):
        row = n + offset
        fixed_mask[row, anchor.dim] = True
        fixed_values[row, anchor.dim] = anchor.sign * scale
        observed = ~np.isnan(anchor.responses)
        if observed.any():
            match = np.all(
                data.values[:, observed] == anchor.responses[observed][None, :], axis=1
            )
            for unit in np.nonzero(match)[0]:
                fixed_mask[unit, anchor.dim] = True
                fixed_values[unit, anchor.dim] = anchor.sign * scale
                duplicates.append(
                    {
                        "unit_index": int(unit),
                        "unit_id": data.unit_ids[unit],
                        "dim": int(anchor.dim),
                        "dimension": constraints.dimension_names[anchor.dim],
                        "value": float(anchor.sign * scale),
                    }
                )

    import warnings as _warnings

    with _warnings.catch_warnings():
        # anchor rows are mostly missing by construction; the all-missing
        # column warning belongs to the caller's original data only
        _warnings.simplefilter("ignore")
        augmented = ResponseMatrix(values, tuple(unit_ids), data.item_ids)
    return AugmentedData(
        data=augmented,
        fixed_mask=fixed_mask,
        fixed_values=fixed_values,
        anchor_rows=tuple(range(n, total)),
        duplicate_report=tuple(duplicates),
    )


def strip_anchors(draws: PosteriorDraws, anchor_rows) -> PosteriorDraws:
    """Drop anchor rows from the stored latent draws; real units stay."""
    anchor_rows = tuple(int(r) for r in anchor_rows)
    if not anchor_rows:
        return draws
    n_total = draws.theta.shape[2]
    keep = np.setdiff1d(np.arange(n_total), np.asarray(anchor_rows, dtype=int))
    unit_ids = tuple(draws.unit_ids[i] for i in keep)
    return replace(draws, theta=draws.theta[:, :, keep, :], unit_ids=unit_ids)
