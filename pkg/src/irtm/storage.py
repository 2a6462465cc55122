"""File formats: response/constraint CSVs, draw files, summaries, configs.

Conventions: response cells are "0"/"1", with "" or "NA" for missing;
constraint cells are decimal reals or "NA". Draw files are one CSV per
parameter group in long format so external tooling can consume them
directly. All floats are written with shortest round-trip repr, so a
written file re-read and re-written is byte identical.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    ConstraintSet,
    Hyperparameters,
    PosteriorDraws,
    ResponseMatrix,
    ValidationError,
    stable_digest,
)

__all__ = [
    "RunConfig",
    "load_constraints",
    "read_draws",
    "read_response_matrix",
    "write_draws",
    "write_response_matrix",
    "write_summary",
]

ENV_OUTPUT_DIR = "IRTM_OUTPUT_DIR"
ENV_THREADS = "IRTM_THREADS"


def _fmt(value: float) -> str:
    if np.isnan(value):
        return "NA"
    return repr(float(value))


def _parse_binary_cell(cell: str, where: str) -> float:
    cell = cell.strip()
    if cell in ("", "NA"):
        return np.nan
    if cell == "0":
        return 0.0
    if cell == "1":
        return 1.0
    raise ValidationError(f"{where}: expected 0, 1, NA, or empty, got {cell!r}")


def write_response_matrix(data: ResponseMatrix, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", *data.item_ids])
        for i, unit in enumerate(data.unit_ids):
            row = [unit]
            for v in data.values[i]:
                row.append("" if np.isnan(v) else str(int(v)))
            writer.writerow(row)


def read_response_matrix(path) -> ResponseMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if not header or header[0] != "unit_id":
            raise ValidationError(f"{path}: first header column must be 'unit_id'")
        item_ids = tuple(header[1:])
        unit_ids: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(item_ids) + 1:
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(item_ids) + 1} cells, got {len(row)}"
                )
            unit_ids.append(row[0])
            rows.append(
                [
                    _parse_binary_cell(c, f"{path}:{lineno} column {item_ids[j]!r}")
                    for j, c in enumerate(row[1:])
                ]
            )
    return ResponseMatrix(np.asarray(rows, dtype=float), tuple(unit_ids), item_ids)


def load_constraints(path, item_ids=None) -> ConstraintSet:
    """Read a constraint-code CSV, reordering rows to match ``item_ids``.

    Header row holds dimension names after the leading ``item_id`` column;
    cells are decimal reals or "NA". When ``item_ids`` is given, the table
    must cover exactly those items (matched by id, not position).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if not header or header[0] != "item_id":
            raise ValidationError(f"{path}: first header column must be 'item_id'")
        dim_names = tuple(header[1:])
        if not dim_names:
            raise ValidationError(f"{path}: no dimension columns found")
        table: dict[str, list[float]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(dim_names) + 1:
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(dim_names) + 1} cells, got {len(row)}"
                )
            item = row[0]
            if item in table:
                raise ValidationError(f"{path}:{lineno}: duplicate item id {item!r}")
            codes = []
            for j, cell in enumerate(row[1:]):
                cell = cell.strip()
                if cell in ("", "NA"):
                    codes.append(np.nan)
                    continue
                try:
                    codes.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: column {dim_names[j]!r}: malformed code {cell!r}"
                    ) from None
            table[item] = codes
            order.append(item)

    if item_ids is None:
        ordered = order
    else:
        missing = [i for i in item_ids if i not in table]
        extra = [i for i in order if i not in set(item_ids)]
        if missing or extra:
            parts = []
            if extra:
                parts.append(f"rows for unknown items {extra}")
            if missing:
                parts.append(f"no row for items {missing}")
            raise ValidationError(f"{path}: " + "; ".join(parts))
        ordered = list(item_ids)
    codes = np.asarray([table[i] for i in ordered], dtype=float)
    return ConstraintSet(codes, dim_names, tuple(ordered))


def write_constraints(constraints: ConstraintSet, path) -> None:
    path = Path(path)
    item_ids = constraints.item_ids or tuple(
        f"item{i}" for i in range(constraints.n_items)
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", *constraints.dimension_names])
        for i, item in enumerate(item_ids):
            writer.writerow(
                [item, *("NA" if np.isnan(c) else f"{c:g}" for c in constraints.codes[i])]
            )


_DRAW_FILES = {
    "theta": ("theta.csv", ("unit", "dim")),
    "loadings": ("lambda.csv", ("item", "dim")),
    "intercepts": ("b.csv", ("item",)),
    "factor_cov": ("sigma.csv", ("row", "col")),
}


def write_draws(draws: PosteriorDraws, out_dir) -> None:
    """Persist draws as one long-format CSV per parameter group plus metadata."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    labels = {
        "theta": (draws.unit_ids, draws.dimension_names),
        "loadings": (draws.item_ids, draws.dimension_names),
        "intercepts": (draws.item_ids,),
        "factor_cov": (draws.dimension_names, draws.dimension_names),
    }
    for name, (fname, axes) in _DRAW_FILES.items():
        arr = getattr(draws, name)
        with (out_dir / fname).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*axes, "chain", "draw", "value"])
            n_chains, n_draws = arr.shape[:2]
            for chain in range(n_chains):
                for s in range(n_draws):
                    block = arr[chain, s]
                    if block.ndim == 1:
                        for a, label in enumerate(labels[name][0]):
                            writer.writerow([label, chain, s, _fmt(block[a])])
                    else:
                        rows_lab, cols_lab = labels[name]
                        for a, ra in enumerate(rows_lab):
                            for b, cb in enumerate(cols_lab):
                                writer.writerow([ra, cb, chain, s, _fmt(block[a, b])])

    meta = {
        "unit_ids": list(draws.unit_ids),
        "item_ids": list(draws.item_ids),
        "dimension_names": list(draws.dimension_names),
        "n_chains": int(draws.n_chains),
        "n_draws": int(draws.n_draws),
        "constraints_digest": draws.constraints_digest,
        "config_digest": draws.config_digest,
        "hyper": _hyper_json(draws.hyper),
    }
    (out_dir / "draws_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2))


def _hyper_json(hyper: Hyperparameters) -> dict:
    out = hyper.digest_fields()
    if isinstance(out.get("scale_matrix"), np.ndarray):
        out["scale_matrix"] = out["scale_matrix"].tolist()
    return out


def read_draws(out_dir) -> PosteriorDraws:
    """Load a draw directory written by :func:`write_draws`."""
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "draws_meta.json").read_text())
    unit_ids = tuple(meta["unit_ids"])
    item_ids = tuple(meta["item_ids"])
    dims = tuple(meta["dimension_names"])
    n_chains, n_draws = meta["n_chains"], meta["n_draws"]

    index = {
        "theta": ({u: i for i, u in enumerate(unit_ids)}, {d: i for i, d in enumerate(dims)}),
        "loadings": ({u: i for i, u in enumerate(item_ids)}, {d: i for i, d in enumerate(dims)}),
        "intercepts": ({u: i for i, u in enumerate(item_ids)},),
        "factor_cov": ({d: i for i, d in enumerate(dims)}, {d: i for i, d in enumerate(dims)}),
    }
    shapes = {
        "theta": (n_chains, n_draws, len(unit_ids), len(dims)),
        "loadings": (n_chains, n_draws, len(item_ids), len(dims)),
        "intercepts": (n_chains, n_draws, len(item_ids)),
        "factor_cov": (n_chains, n_draws, len(dims), len(dims)),
    }
    arrays = {}
    for name, (fname, axes) in _DRAW_FILES.items():
        arr = np.full(shapes[name], np.nan)
        with (out_dir / fname).open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            maps = index[name]
            for row in reader:
                *labels, chain, s, value = row
                pos = tuple(maps[i][lab] for i, lab in enumerate(labels))
                val = np.nan if value == "NA" else float(value)
                arr[(int(chain), int(s), *pos)] = val
        arrays[name] = arr

    hyper_fields = dict(meta["hyper"])
    if hyper_fields.get("scale_matrix") is not None:
        hyper_fields["scale_matrix"] = np.asarray(hyper_fields["scale_matrix"])
    return PosteriorDraws(
        theta=arrays["theta"],
        loadings=arrays["loadings"],
        intercepts=arrays["intercepts"],
        factor_cov=arrays["factor_cov"],
        unit_ids=unit_ids,
        item_ids=item_ids,
        dimension_names=dims,
        hyper=Hyperparameters(**hyper_fields),
        constraints_digest=meta["constraints_digest"],
        config_digest=meta["config_digest"],
    )


def write_summary(draws: PosteriorDraws, path, level: float = 0.95) -> dict:
    """Posterior summary JSON: per-unit position means and credible bounds,
    per-item loading/intercept means, and the mean factor covariance."""
    alpha = (1.0 - level) / 2.0
    theta = draws.pooled("theta")
    summary = {
        "config_digest": draws.config_digest,
        "constraints_digest": draws.constraints_digest,
        "n_chains": int(draws.n_chains),
        "n_draws_per_chain": int(draws.n_draws),
        "dimension_names": list(draws.dimension_names),
        "theta": {
            "unit_ids": list(draws.unit_ids),
            "mean": draws.theta_mean().tolist(),
            "ci_lower": np.quantile(theta, alpha, axis=0).tolist(),
            "ci_upper": np.quantile(theta, 1 - alpha, axis=0).tolist(),
        },
        "loadings": {
            "item_ids": list(draws.item_ids),
            "mean": draws.loadings_mean().tolist(),
        },
        "intercepts": {
            "item_ids": list(draws.item_ids),
            "mean": draws.intercepts_mean().tolist(),
        },
        "factor_cov": {"mean": draws.factor_cov_mean().tolist()},
    }
    Path(path).write_text(json.dumps(summary, sort_keys=True, indent=2))
    return summary


@dataclass
class RunConfig:
    """A fit invocation: file paths plus every semantically relevant knob.

    Serializable to a flat ``key = value`` file. The digest covers only
    fields that change the result, including the input file contents, and
    ignores output locations.
    """

    data_path: str = ""
    constraints_path: str = ""
    method: str = "irtm"
    output_dir: str = "irtm-out"
    anchor_dims: str = "all"  # "all", "none", or comma-separated indices
    force: bool = False
    n_factors: int | None = None  # required for methods without constraints
    n_jobs: int = 1
    hyper: Hyperparameters = field(default_factory=Hyperparameters)

    _BOOLS = ("force", "correlated_factors")
    _HYPER_INTS = ("n_iterations", "n_burnin", "thin", "n_chains", "inner_tmvn_sweeps", "seed")

    def apply_env(self, env=None) -> "RunConfig":
        env = os.environ if env is None else env
        if ENV_OUTPUT_DIR in env:
            self.output_dir = env[ENV_OUTPUT_DIR]
        if ENV_THREADS in env:
            self.n_jobs = int(env[ENV_THREADS])
        return self

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        hyper_fields: dict = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in ("data_path", "constraints_path", "method", "output_dir", "anchor_dims"):
                setattr(cfg, key, value)
            elif key == "force":
                cfg.force = value.lower() in ("1", "true", "yes")
            elif key == "n_factors":
                cfg.n_factors = int(value)
            elif key == "n_jobs":
                cfg.n_jobs = int(value)
            elif key == "correlated_factors":
                hyper_fields[key] = value.lower() in ("1", "true", "yes")
            elif key in cls._HYPER_INTS:
                hyper_fields[key] = int(value)
            elif key in ("nu0", "anchor_scale"):
                hyper_fields[key] = float(value)
            elif key == "sigma_normalization":
                hyper_fields[key] = value
            else:
                raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
        if hyper_fields:
            cfg.hyper = Hyperparameters(**hyper_fields)
        return cfg

    def to_file(self, path) -> None:
        lines = [
            f"data_path = {self.data_path}",
            f"constraints_path = {self.constraints_path}",
            f"method = {self.method}",
            f"output_dir = {self.output_dir}",
            f"anchor_dims = {self.anchor_dims}",
            f"force = {str(self.force).lower()}",
            f"n_jobs = {self.n_jobs}",
        ]
        if self.n_factors is not None:
            lines.append(f"n_factors = {self.n_factors}")
        h = self.hyper
        lines += [
            f"n_iterations = {h.n_iterations}",
            f"n_burnin = {h.n_burnin}",
            f"thin = {h.thin}",
            f"n_chains = {h.n_chains}",
            f"seed = {h.seed}",
            f"correlated_factors = {str(h.correlated_factors).lower()}",
            f"anchor_scale = {h.anchor_scale:g}",
            f"inner_tmvn_sweeps = {h.inner_tmvn_sweeps}",
            f"sigma_normalization = {h.sigma_normalization}",
        ]
        if h.nu0 is not None:
            lines.append(f"nu0 = {h.nu0:g}")
        Path(path).write_text("\n".join(lines) + "\n")

    def semantic_digest(self, data_bytes: bytes = b"", constraints_bytes: bytes = b"") -> str:
        return stable_digest(
            {
                "method": self.method,
                "anchor_dims": self.anchor_dims,
                "n_factors": self.n_factors,
                "hyper": {
                    k: (v.tolist() if isinstance(v, np.ndarray) else v)
                    for k, v in self.hyper.digest_fields().items()
                },
                "data_sha": __import__("hashlib").sha256(data_bytes).hexdigest(),
                "constraints_sha": __import__("hashlib").sha256(constraints_bytes).hexdigest(),
            }
        )


def write_benchmark_rows(rows, path) -> None:
    """Deterministic results CSV; wall times go to a separate timings file."""
    fields = [
        "n_units",
        "n_items",
        "n_factors",
        "fraction",
        "method",
        "replicate",
        "mse_theta",
        "mse_loadings",
        "coverage_theta",
        "coverage_loadings",
        "ess_theta",
        "rhat_theta",
        "geweke_rejection_rate",
        "error",
    ]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow(
                [
                    _fmt(getattr(row, f)) if isinstance(getattr(row, f), float) else getattr(row, f)
                    for f in fields
                ]
            )


def write_benchmark_timings(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_units", "n_items", "n_factors", "fraction", "method", "replicate", "wall_time"])
        for row in rows:
            writer.writerow(
                [row.n_units, row.n_items, row.n_factors, _fmt(row.fraction), row.method, row.replicate, _fmt(row.wall_time)]
            )


def write_aggregate(entries, path) -> None:
    if not entries:
        Path(path).write_text("")
        return
    fields = list(entries[0].keys())
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for entry in entries:
            writer.writerow(
                [_fmt(v) if isinstance(v, float) else v for v in (entry[f] for f in fields)]
            )
