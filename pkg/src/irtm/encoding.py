"""One-hot encoding of raw categorical/ordinal/continuous tables.

Every non-dichotomous choice must become a set of dichotomous ones before
modeling: an L-category column expands into L indicator columns (exactly
one 1 per observed row), a continuous column becomes a single indicator of
exceeding its threshold, and missing cells propagate missingness to every
derived column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ResponseMatrix, ValidationError

__all__ = ["ColumnSchema", "EncodedColumn", "RawTable", "one_hot_encode"]

_KINDS = ("categorical", "ordinal", "continuous")


@dataclass(frozen=True)
class ColumnSchema:
    """Declared type of one raw column.

    Categorical and ordinal columns need ``categories``; continuous
    columns need ``threshold``.
    """

    name: str
    kind: str
    categories: tuple[str, ...] | None = None
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(
                f"column {self.name!r}: unknown kind {self.kind!r}, expected one of {_KINDS}"
            )
        if self.kind in ("categorical", "ordinal"):
            if not self.categories:
                raise ValidationError(f"column {self.name!r}: categories are required")
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        else:
            if self.threshold is None:
                raise ValidationError(
                    f"column {self.name!r}: continuous columns need a threshold"
                )


@dataclass(frozen=True)
class RawTable:
    """N rows of raw cells under a per-column schema; None marks missing."""

    columns: tuple[ColumnSchema, ...]
    rows: tuple[tuple, ...]
    unit_ids: tuple[str, ...] = ()

    def __post_init__(self):
        cols = tuple(self.columns)
        rows = tuple(tuple(r) for r in self.rows)
        for i, row in enumerate(rows):
            if len(row) != len(cols):
                raise ValidationError(
                    f"row {i} has {len(row)} cells, schema declares {len(cols)} columns"
                )
        unit_ids = tuple(self.unit_ids) or tuple(f"unit{i}" for i in range(len(rows)))
        if len(unit_ids) != len(rows):
            raise ValidationError("unit id count does not match row count")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "unit_ids", unit_ids)


@dataclass(frozen=True)
class EncodedColumn:
    """Provenance of one encoded item back to its raw column."""

    item_id: str
    source: str
    category: str | None = None
    threshold: float | None = None


def _is_missing(cell) -> bool:
    if cell is None:
        return True
    if isinstance(cell, float) and np.isnan(cell):
        return True
    return isinstance(cell, str) and cell.strip() in ("", "NA")


def one_hot_encode(raw: RawTable) -> tuple[ResponseMatrix, list[EncodedColumn]]:
    """Expand a raw table into a binary response matrix plus a column map."""
    column_map: list[EncodedColumn] = []
    blocks: list[np.ndarray] = []
    n = len(raw.rows)

    for c, schema in enumerate(raw.columns):
        cells = [row[c] for row in raw.rows]
        if schema.kind in ("categorical", "ordinal"):
            cats = schema.categories
            block = np.zeros((n, len(cats)))
            for i, cell in enumerate(cells):
                if _is_missing(cell):
                    block[i, :] = np.nan
                    continue
                value = str(cell)
                if value not in cats:
                    raise ValidationError(
                        f"row {i}, column {schema.name!r}: unseen category {value!r}"
                    )
                block[i, cats.index(value)] = 1.0
            for cat in cats:
                column_map.append(
                    EncodedColumn(
                        item_id=f"{schema.name}={cat}", source=schema.name, category=cat
                    )
                )
        else:
            block = np.zeros((n, 1))
            for i, cell in enumerate(cells):
                if _is_missing(cell):
                    block[i, 0] = np.nan
                    continue
                try:
                    value = float(cell)
                except (TypeError, ValueError) as exc:
                    raise ValidationError(
                        f"row {i}, column {schema.name!r}: not a number: {cell!r}"
                    ) from exc
                block[i, 0] = 1.0 if value > schema.threshold else 0.0
            column_map.append(
                EncodedColumn(
                    item_id=f"{schema.name}>{schema.threshold:g}",
                    source=schema.name,
                    threshold=schema.threshold,
                )
            )
        blocks.append(block)

    values = np.hstack(blocks)
    item_ids = tuple(col.item_id for col in column_map)
    return ResponseMatrix(values, raw.unit_ids, item_ids), column_map
