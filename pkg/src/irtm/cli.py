"""Command-line surface: encode, anchors, fit, diagnose, simulate, bench.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .anchors import augment_with_anchors
from .baselines import fit_pca, fit_unconstrained_irt
from .diagnostics import ess_rank_normalized, geweke_z, split_rhat
from .encoding import ColumnSchema, RawTable, one_hot_encode
from .gibbs import IdentificationError, run_sampler
from .model import Hyperparameters, ValidationError, validate_identification
from .sampling import DecompositionError
from .simulation import (
    SimDesign,
    aggregate_benchmark,
    generate_dataset,
    run_benchmark,
)
from .storage import (
    RunConfig,
    load_constraints,
    read_draws,
    read_response_matrix,
    write_aggregate,
    write_benchmark_rows,
    write_benchmark_timings,
    write_constraints,
    write_draws,
    write_response_matrix,
    write_summary,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _build_parser() -> _Parser:
    parser = _Parser(prog="irtm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="one-hot encode a raw table into binary responses")
    enc.add_argument("--data", required=True, help="raw CSV with header row")
    enc.add_argument("--schema", required=True, help="JSON column schema")
    enc.add_argument("--out", required=True, help="output response CSV")
    enc.add_argument("--map-out", default=None, help="optional column-map JSON")

    anc = sub.add_parser("anchors", help="emit the anchor-augmented matrix and mask")
    anc.add_argument("--data", required=True)
    anc.add_argument("--m", required=True, help="constraint CSV")
    anc.add_argument("--anchor-scale", type=float, default=4.0)
    anc.add_argument("--dims", default="all", help="'all' or comma-separated indices")
    anc.add_argument("--out", required=True, help="output directory")

    fit = sub.add_parser("fit", help="run the sampler or a baseline")
    fit.add_argument("--config", default=None, help="key = value config file")
    fit.add_argument("--data", default=None)
    fit.add_argument("--m", default=None, help="constraint CSV (irtm methods)")
    fit.add_argument("--method", default=None, choices=["irtm", "irt", "pca"])
    fit.add_argument("--d", type=int, default=None, help="factor count for irt/pca")
    fit.add_argument("--iters", type=int, default=None)
    fit.add_argument("--burnin", type=int, default=None)
    fit.add_argument("--thin", type=int, default=None)
    fit.add_argument("--chains", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--uncorrelated", action="store_true", help="fix the factor covariance at I")
    fit.add_argument("--anchors", default=None, help="'all', 'none', or comma-separated indices")
    fit.add_argument("--anchor-scale", type=float, default=None)
    fit.add_argument("--force", action="store_true")
    fit.add_argument("--jobs", type=int, default=None)
    fit.add_argument("--out", default=None)

    diag = sub.add_parser("diagnose", help="convergence report from stored draws")
    diag.add_argument("--draws", required=True, help="draw directory from fit")
    diag.add_argument("--param", default="theta", choices=["theta", "lambda", "b", "sigma"])
    diag.add_argument("--out", default=None, help="output JSON (default stdout)")

    sim = sub.add_parser("simulate", help="generate one synthetic data set")
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--k", type=int, default=100)
    sim.add_argument("--d", type=int, default=3)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--missing", type=float, default=0.0)
    sim.add_argument("--out", required=True, help="output directory")

    ben = sub.add_parser("bench", help="run the benchmark grid")
    ben.add_argument("--n-units", type=_int_list, default=(50, 100))
    ben.add_argument("--n-items", type=_int_list, default=(50, 100))
    ben.add_argument("--n-factors", type=_int_list, default=(2, 3))
    ben.add_argument("--replicates", type=int, default=20)
    ben.add_argument("--methods", default="irtm-corr,irtm-uncorr,irt,pca")
    ben.add_argument("--fractions", type=_float_list, default=(0.0,))
    ben.add_argument("--iters", type=int, default=3000)
    ben.add_argument("--burnin", type=int, default=2000)
    ben.add_argument("--chains", type=int, default=2)
    ben.add_argument("--missing", type=float, default=0.0)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--jobs", type=int, default=1)
    ben.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_encode(args) -> int:
    schema_doc = json.loads(Path(args.schema).read_text())
    columns = tuple(
        ColumnSchema(
            name=c["name"],
            kind=c["kind"],
            categories=tuple(c["categories"]) if c.get("categories") else None,
            threshold=c.get("threshold"),
        )
        for c in schema_doc["columns"]
    )
    import csv as _csv

    with Path(args.data).open(newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    by_name = {name: idx for idx, name in enumerate(header)}
    missing_cols = [c.name for c in columns if c.name not in by_name]
    if missing_cols:
        raise ValidationError(f"schema columns absent from data: {missing_cols}")
    unit_col = 0 if header and header[0] == "unit_id" else None
    unit_ids = tuple(r[unit_col] for r in rows) if unit_col is not None else ()
    table = RawTable(
        columns=columns,
        rows=tuple(tuple(r[by_name[c.name]] for c in columns) for r in rows),
        unit_ids=unit_ids,
    )
    encoded, column_map = one_hot_encode(table)
    write_response_matrix(encoded, args.out)
    if args.map_out:
        Path(args.map_out).write_text(
            json.dumps(
                [
                    {
                        "item_id": c.item_id,
                        "source": c.source,
                        "category": c.category,
                        "threshold": c.threshold,
                    }
                    for c in column_map
                ],
                indent=2,
            )
        )
    print(f"encoded {encoded.n_units} units x {encoded.n_items} items -> {args.out}")
    return EXIT_OK


def _cmd_anchors(args) -> int:
    data = read_response_matrix(args.data)
    constraints = load_constraints(args.m, data.item_ids)
    which = "all" if args.dims == "all" else _int_list(args.dims)
    aug = augment_with_anchors(data, constraints, args.anchor_scale, which)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_response_matrix(aug.data, out / "augmented.csv")
    mask_doc = {
        "anchor_rows": list(aug.anchor_rows),
        "fixed": [
            {"row": int(i), "dim": int(j), "value": float(aug.fixed_values[i, j])}
            for i, j in zip(*np.nonzero(aug.fixed_mask))
        ],
        "duplicates": list(aug.duplicate_report),
    }
    (out / "anchor_mask.json").write_text(json.dumps(mask_doc, indent=2, sort_keys=True))
    print(f"appended {aug.n_anchors} anchors -> {out}")
    return EXIT_OK


def _merge_fit_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.data is not None:
        cfg.data_path = args.data
    if args.m is not None:
        cfg.constraints_path = args.m
    if args.method is not None:
        cfg.method = args.method
    if args.d is not None:
        cfg.n_factors = args.d
    if args.out is not None:
        cfg.output_dir = args.out
    if args.anchors is not None:
        cfg.anchor_dims = args.anchors
    if args.force:
        cfg.force = True
    if args.jobs is not None:
        cfg.n_jobs = args.jobs
    hyper_updates = {}
    for key, val in (
        ("n_iterations", args.iters),
        ("n_burnin", args.burnin),
        ("thin", args.thin),
        ("n_chains", args.chains),
        ("seed", args.seed),
        ("anchor_scale", args.anchor_scale),
    ):
        if val is not None:
            hyper_updates[key] = val
    if args.uncorrelated:
        hyper_updates["correlated_factors"] = False
    if hyper_updates:
        cfg.hyper = replace(cfg.hyper, **hyper_updates)
    cfg.apply_env()
    return cfg


def _cmd_fit(args) -> int:
    cfg = _merge_fit_config(args)
    if not cfg.data_path:
        raise ValidationError("fit needs --data (or a config file with data_path)")
    data = read_response_matrix(cfg.data_path)
    data_bytes = Path(cfg.data_path).read_bytes()

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.method == "pca":
        if cfg.n_factors is None:
            raise ValidationError("pca needs --d")
        result = fit_pca(data, cfg.n_factors)
        doc = {
            "method": "pca",
            "config_digest": cfg.semantic_digest(data_bytes),
            "unit_ids": list(data.unit_ids),
            "item_ids": list(data.item_ids),
            "scores": result.scores.tolist(),
            "components": result.components.tolist(),
            "eigenvalues": result.eigenvalues.tolist(),
        }
        (out / "summary.json").write_text(json.dumps(doc, sort_keys=True, indent=2))
        print(f"pca fit written -> {out / 'summary.json'}")
        return EXIT_OK

    if cfg.method == "irt":
        if cfg.n_factors is None:
            raise ValidationError("irt needs --d")
        draws = fit_unconstrained_irt(data, cfg.n_factors, cfg.hyper, n_jobs=cfg.n_jobs)
        draws = _with_digest(draws, cfg.semantic_digest(data_bytes))
    else:
        if not cfg.constraints_path:
            raise ValidationError("irtm needs --m (or a config file with constraints_path)")
        constraints = load_constraints(cfg.constraints_path, data.item_ids)
        constraints_bytes = Path(cfg.constraints_path).read_bytes()
        anchor_dims = _parse_anchor_dims(cfg.anchor_dims)
        try:
            draws = run_sampler(
                data,
                constraints,
                cfg.hyper,
                anchor_dims=anchor_dims,
                force=cfg.force,
                n_jobs=cfg.n_jobs,
            )
        except IdentificationError as exc:
            print(exc.report.describe(), file=sys.stderr)
            print("pass --force to run anyway", file=sys.stderr)
            return EXIT_DATA
        draws = _with_digest(draws, cfg.semantic_digest(data_bytes, constraints_bytes))

    write_draws(draws, out)
    write_summary(draws, out / "summary.json")
    cfg.to_file(out / "run_config.txt")
    print(f"{cfg.method} fit: {draws.n_chains} chains x {draws.n_draws} draws -> {out}")
    return EXIT_OK


def _with_digest(draws, digest: str):
    from dataclasses import replace as _replace

    return _replace(draws, config_digest=digest)


def _parse_anchor_dims(text: str):
    if text == "all":
        return "all"
    if text in ("none", ""):
        return None
    return _int_list(text)


def _cmd_diagnose(args) -> int:
    draws = read_draws(args.draws)
    name = {"theta": "theta", "lambda": "loadings", "b": "intercepts", "sigma": "factor_cov"}[
        args.param
    ]
    arr = getattr(draws, name)  # (chains, draws, ...)
    flat = arr.reshape(arr.shape[0], arr.shape[1], -1)
    coords = flat.shape[2]

    labels = {
        "theta": [f"{u}:{d}" for u in draws.unit_ids for d in draws.dimension_names],
        "loadings": [f"{i}:{d}" for i in draws.item_ids for d in draws.dimension_names],
        "intercepts": list(draws.item_ids),
        "factor_cov": [
            f"{a}:{b}" for a in draws.dimension_names for b in draws.dimension_names
        ],
    }[name]

    import warnings as _warnings

    report = {}
    for c in range(coords):
        chains = flat[:, :, c]
        with _warnings.catch_warnings(record=True) as caught:
            _warnings.simplefilter("always")
            ess = ess_rank_normalized(chains)
            rhat = split_rhat(chains)
            z, p = geweke_z(chains[0])
            degenerate = any("Degenerate" in type(w.message).__name__ for w in caught)
        entry = {
            "ess": None if np.isnan(ess) else ess,
            "rhat": None if np.isnan(rhat) else rhat,
            "geweke_z": None if np.isnan(z) else z,
            "geweke_p": None if np.isnan(p) else p,
        }
        if degenerate:
            entry["degenerate"] = True
        report[labels[c]] = entry

    doc = {"param": args.param, "config_digest": draws.config_digest, "coordinates": report}
    text = json.dumps(doc, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"diagnostics -> {args.out}")
    else:
        print(text)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    design = SimDesign(
        n_units=(args.n,),
        n_items=(args.k,),
        n_factors=(args.d,),
        n_replicates=1,
        missing_fraction=args.missing,
        seed=args.seed,
    )
    from .sampling import RngStream
    from .simulation import derive_seed

    stream = RngStream(derive_seed(args.seed, "gen", (args.n, args.k, args.d), 0), 0)
    data, truth, constraints = generate_dataset((args.n, args.k, args.d), design, stream)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_response_matrix(data, out / "responses.csv")
    write_constraints(constraints, out / "constraints.csv")
    truth_doc = {
        "theta": truth.theta.tolist(),
        "loadings": truth.loadings.tolist(),
        "intercepts": truth.intercepts.tolist(),
        "factor_cov": truth.factor_cov.tolist(),
    }
    (out / "truth.json").write_text(json.dumps(truth_doc, sort_keys=True))
    print(f"simulated N={args.n} K={args.k} d={args.d} -> {out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    design = SimDesign(
        n_units=args.n_units,
        n_items=args.n_items,
        n_factors=args.n_factors,
        n_replicates=args.replicates,
        misspecification_fractions=args.fractions,
        methods=methods,
        hyper=Hyperparameters(
            n_iterations=args.iters, n_burnin=args.burnin, n_chains=args.chains
        ),
        missing_fraction=args.missing,
        seed=args.seed,
    )
    rows = run_benchmark(design, n_jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_benchmark_rows(rows, out / "results.csv")
    write_benchmark_timings(rows, out / "timings.csv")
    write_aggregate(aggregate_benchmark(rows), out / "aggregate.csv")
    manifest = {
        "design": {
            "n_units": list(design.n_units),
            "n_items": list(design.n_items),
            "n_factors": list(design.n_factors),
            "n_replicates": design.n_replicates,
            "fractions": list(design.misspecification_fractions),
            "methods": list(design.methods),
            "missing_fraction": design.missing_fraction,
            "seed": design.seed,
            "iters": design.hyper.n_iterations,
            "burnin": design.hyper.n_burnin,
            "chains": design.hyper.n_chains,
        },
        "n_rows": len(rows),
        "n_failed": sum(1 for r in rows if r.error),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    failed = manifest["n_failed"]
    print(f"bench: {len(rows)} runs ({failed} failed) -> {out}")
    return EXIT_OK


_COMMANDS = {
    "encode": _cmd_encode,
    "anchors": _cmd_anchors,
    "fit": _cmd_fit,
    "diagnose": _cmd_diagnose,
    "simulate": _cmd_simulate,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DecompositionError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
