"""Benchmark CLI: generate data, train on the simulated machine, run scaling
sweeps, and sanity-check the sigmoid table.

Reports append to a CSV whose first line is a format version tag; every value
is formatted deterministically (repr for floats), so two identical runs
produce byte-identical records except for the wall_time_s column.

Exit codes: 0 success, 2 configuration/input error, 3 bank capacity exceeded,
4 fixed-point overflow.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from .baseline import oracle_dtree, oracle_kmeans, oracle_linreg, oracle_logreg
from .config import BenchConfig, load_config
from .errors import (
    CapacityError,
    ConfigError,
    FixedPointOverflowError,
    KernelLaunchError,
    PimmlError,
)
from .kernels import (
    Hyperparams,
    dtree_train,
    kmeans_train,
    linreg_train,
    logreg_train,
    load_dataset,
    metrics,
    model_to_text,
    predict,
)
from .layout import (
    Dataset,
    ingest_csv,
    minmax_scale,
    synth_blobs,
    synth_labels_tree,
    synth_linear,
    write_csv,
)
from .lut import (
    SIGMOID_LIPSCHITZ,
    build_lut,
    lut_error_bound,
    lut_max_error,
    sigmoid,
)
from .pimsim import create_device

ALGOS = ("linreg", "logreg", "kmeans", "dtree")

REPORT_VERSION = "pimml-report v1"
REPORT_COLUMNS = [
    "algo", "mode", "cores", "dataset", "rows", "features", "seed",
    "lr", "iterations", "k", "max_depth", "min_samples", "n_bins",
    "metrics", "parity",
    "to_device_bytes", "from_device_bytes", "host_transfer_cycles",
    "max_compute_cycles", "max_dma_cycles",
    "serialized_total_cycles", "overlapped_total_cycles",
    "iterations_run", "wall_time_s",
]


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_pairs(pairs: dict) -> str:
    return ";".join(f"{k}={_fmt_value(v)}" for k, v in pairs.items())


def append_report(path: str, row: dict) -> None:
    """Append one record, creating the file with version + header if needed."""
    missing = {c for c in REPORT_COLUMNS if c not in row}
    if missing:
        raise ValueError(f"report row missing columns: {sorted(missing)}")
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8") as fh:
        if fresh:
            fh.write(REPORT_VERSION + "\n")
            fh.write(",".join(REPORT_COLUMNS) + "\n")
        fh.write(",".join(_fmt_value(row[c]) for c in REPORT_COLUMNS) + "\n")


# ---------------------------------------------------------------------------
# Shared train/compare plumbing.
# ---------------------------------------------------------------------------


def _hyperparams(cfg: BenchConfig) -> Hyperparams:
    return Hyperparams(
        learning_rate=cfg.learning_rate,
        iterations=cfg.iterations,
        k=cfg.k,
        max_depth=cfg.max_depth,
        min_samples=cfg.min_samples,
        n_bins=cfg.n_bins,
        mode=cfg.mode,
        fmt=cfg.fmt,
    )


def _train_once(cfg: BenchConfig, algo: str, ds: Dataset, hp: Hyperparams):
    dev = create_device(cfg.device)
    packed = load_dataset(dev, ds, hp)
    if algo == "linreg":
        model, report = linreg_train(dev, packed, hp)
    elif algo == "logreg":
        lut = build_lut(sigmoid, cfg.lut_lo, cfg.lut_hi, cfg.lut_entries, cfg.fmt)
        model, report = logreg_train(dev, packed, hp, lut)
    elif algo == "kmeans":
        model, report = kmeans_train(dev, packed, hp)
    elif algo == "dtree":
        model, report = dtree_train(dev, packed, hp)
    else:
        raise ConfigError(f"unknown algorithm {algo!r}")
    return model, report


def _parity(algo: str, model, ds: Dataset, hp: Hyperparams) -> dict:
    """Train the double-precision single-machine version and compare."""
    if algo == "linreg":
        orc = oracle_linreg(ds, hp)
        gap = float(np.max(np.abs(model.weights - orc.model.weights)))
        return {"weight_gap": gap}
    if algo == "logreg":
        orc = oracle_logreg(ds, hp)
        agree = float(np.mean(predict(model, ds) == predict(orc.model, ds)))
        return {"agreement": agree}
    if algo == "kmeans":
        orc = oracle_kmeans(ds, hp)
        match = float(np.mean(predict(model, ds) == predict(orc.model, ds)))
        return {"assignments_match": match}
    orc = oracle_dtree(ds, hp)
    return {"trees_equal": int(model.structure() == orc.model.structure())}


def _record(cfg, algo, dataset_name, ds, hp, seed, met, parity, report, wall):
    return {
        "algo": algo,
        "mode": hp.mode,
        "cores": cfg.device.n_cores,
        "dataset": dataset_name,
        "rows": ds.n_rows,
        "features": ds.n_features,
        "seed": seed,
        "lr": float(hp.learning_rate),
        "iterations": hp.iterations,
        "k": hp.k,
        "max_depth": hp.max_depth,
        "min_samples": hp.min_samples,
        "n_bins": hp.n_bins,
        "metrics": _fmt_pairs(met),
        "parity": _fmt_pairs(parity) if parity else "",
        "to_device_bytes": report.to_device_bytes,
        "from_device_bytes": report.from_device_bytes,
        "host_transfer_cycles": report.host_transfer_cycles,
        "max_compute_cycles": report.max_compute_cycles,
        "max_dma_cycles": report.max_dma_cycles,
        "serialized_total_cycles": report.serialized_total_cycles,
        "overlapped_total_cycles": report.overlapped_total_cycles,
        "iterations_run": report.iterations,
        "wall_time_s": float(wall),
    }


def _apply_overrides(cfg: BenchConfig, args) -> BenchConfig:
    dev_over = {}
    if getattr(args, "cores", None) is not None:
        dev_over["n_cores"] = args.cores
    if dev_over:
        cfg.device = dataclasses.replace(cfg.device, **dev_over)
        cfg.device.validate()
    for flag, attr in [
        ("mode", "mode"), ("lr", "learning_rate"), ("iterations", "iterations"),
        ("k", "k"), ("max_depth", "max_depth"), ("min_samples", "min_samples"),
        ("n_bins", "n_bins"),
    ]:
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)
    if cfg.mode not in ("fixed", "real"):
        raise ConfigError(f"mode must be fixed or real, got {cfg.mode!r}")
    return cfg


def _dataset_for(args, algo: str) -> tuple[str, Dataset]:
    if args.data:
        ds = ingest_csv(args.data, has_labels=not args.no_labels)
        if not args.no_scale:
            ds = minmax_scale(ds)
        return os.path.basename(args.data), ds
    # synthetic fallback keyed by algorithm
    n, d, seed = args.rows, args.features, args.seed
    if algo == "linreg":
        ds, _ = synth_linear(n, d, noise_sigma=args.noise, seed=seed)
    elif algo == "logreg":
        ds, _ = synth_blobs(n, d, k=2, spread=args.spread, seed=seed)
    elif algo == "kmeans":
        ds, _ = synth_blobs(n, d, k=args.k or 4, spread=args.spread, seed=seed)
    else:
        ds = synth_labels_tree(n, d, depth=args.max_depth or 3, seed=seed)
    return f"synth-{algo}", ds


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    if args.kind == "linreg":
        ds, _ = synth_linear(args.rows, args.features, args.noise, args.seed)
    elif args.kind == "blobs":
        ds, _ = synth_blobs(args.rows, args.features, args.k, args.spread, args.seed)
    elif args.kind == "tree":
        ds = synth_labels_tree(args.rows, args.features, args.depth, args.seed)
    else:
        raise ConfigError(f"unknown data kind {args.kind!r}")
    write_csv(ds, args.out, header=not args.no_header)
    print(f"wrote {ds.n_rows} rows x {ds.n_features} features to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    hp = _hyperparams(cfg)
    name, ds = _dataset_for(args, args.algo)
    t0 = time.perf_counter()
    model, report = _train_once(cfg, args.algo, ds, hp)
    wall = time.perf_counter() - t0
    met = metrics(model, ds) if ds.labels is not None or args.algo == "kmeans" else {}
    parity = _parity(args.algo, model, ds, hp) if args.compare else {}
    row = _record(cfg, args.algo, name, ds, hp, args.seed, met, parity, report, wall)
    if args.report:
        append_report(args.report, row)
    if args.model_out:
        with open(args.model_out, "w", encoding="utf-8") as fh:
            fh.write(model_to_text(model))
    summary = _fmt_pairs(met) or "ok"
    extra = f" {_fmt_pairs(parity)}" if parity else ""
    print(
        f"{args.algo} mode={hp.mode} cores={cfg.device.n_cores} rows={ds.n_rows} "
        f"iters={report.iterations} {summary}{extra}"
    )
    return 0


def cmd_scale(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    hp = _hyperparams(cfg)
    try:
        cores_list = [int(c) for c in args.cores_list.split(",") if c]
    except ValueError as exc:
        raise ConfigError(f"bad --cores-list: {exc}") from exc
    if not cores_list or any(c < 1 for c in cores_list):
        raise ConfigError("--cores-list needs positive core counts")
    if cores_list != sorted(cores_list):
        raise ConfigError("--cores-list must be ascending")

    for n_cores in cores_list:
        if args.sweep == "weak":
            rows = args.rows_per_core * n_cores
            name = f"weak-{args.algo}-{args.rows_per_core}pc"
        else:
            rows = args.rows
            name = f"strong-{args.algo}-{rows}"
        sub = argparse.Namespace(
            data=None, rows=rows, features=args.features, seed=args.seed,
            noise=0.0, spread=0.3, k=hp.k, max_depth=hp.max_depth,
        )
        _, ds = _dataset_for(sub, args.algo)
        run_cfg = dataclasses.replace(cfg)
        run_cfg.device = dataclasses.replace(cfg.device, n_cores=n_cores)
        run_cfg.device.validate()
        t0 = time.perf_counter()
        model, report = _train_once(run_cfg, args.algo, ds, hp)
        wall = time.perf_counter() - t0
        met = metrics(model, ds) if ds.labels is not None or args.algo == "kmeans" else {}
        row = _record(run_cfg, args.algo, name, ds, hp, args.seed, met, {}, report, wall)
        if args.report:
            append_report(args.report, row)
        print(
            f"{args.sweep} {args.algo} cores={n_cores} rows={rows} "
            f"serialized={report.serialized_total_cycles} "
            f"overlapped={report.overlapped_total_cycles} "
            f"max_compute={report.max_compute_cycles}"
        )
    return 0


def cmd_lut_check(args) -> int:
    cfg = load_config(args.config)
    lo = args.lo if args.lo is not None else cfg.lut_lo
    hi = args.hi if args.hi is not None else cfg.lut_hi
    entries = args.entries if args.entries is not None else cfg.lut_entries
    table = build_lut(sigmoid, lo, hi, entries, cfg.fmt)
    measured = lut_max_error(table, sigmoid, args.samples)
    bound = lut_error_bound(table, SIGMOID_LIPSCHITZ)
    ok = measured <= bound
    print(
        f"lut-check entries={entries} range=[{lo!r},{hi!r}] "
        f"measured={measured!r} bound={bound!r} {'ok' if ok else 'EXCEEDED'}"
    )
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# Argument parsing and entry point.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pimml",
        description="Train classical ML models on a simulated processing-in-memory machine.",
    )
    p.add_argument("--config", default=None, help="INI config path (or PIMML_CONFIG env)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic CSV dataset")
    g.add_argument("--kind", choices=["linreg", "blobs", "tree"], required=True)
    g.add_argument("--rows", type=int, default=1024)
    g.add_argument("--features", type=int, default=8)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--noise", type=float, default=0.1, help="label noise (linreg)")
    g.add_argument("--k", type=int, default=4, help="cluster count (blobs)")
    g.add_argument("--spread", type=float, default=0.3, help="blob spread")
    g.add_argument("--depth", type=int, default=3, help="labeling-rule depth (tree)")
    g.add_argument("--no-header", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one model and report cycle costs")
    t.add_argument("--algo", choices=ALGOS, required=True)
    t.add_argument("--data", default=None, help="CSV file; last column is the label")
    t.add_argument("--no-labels", action="store_true",
                   help="CSV has no label column (clustering input)")
    t.add_argument("--no-scale", action="store_true",
                   help="skip per-feature min-max scaling of CSV input to [-1, 1]")
    t.add_argument("--rows", type=int, default=4096, help="synthetic row count")
    t.add_argument("--features", type=int, default=8)
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--noise", type=float, default=0.1)
    t.add_argument("--spread", type=float, default=0.3)
    t.add_argument("--cores", type=int, default=None)
    t.add_argument("--mode", choices=["fixed", "real"], default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--k", type=int, default=None)
    t.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    t.add_argument("--min-samples", dest="min_samples", type=int, default=None)
    t.add_argument("--n-bins", dest="n_bins", type=int, default=None)
    t.add_argument("--compare", action="store_true",
                   help="also train the double-precision reference and record parity")
    t.add_argument("--report", default=None, help="CSV report file to append to")
    t.add_argument("--model-out", default=None, help="write the trained model as text")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("scale", help="strong/weak scaling sweep over core counts")
    s.add_argument("--algo", choices=ALGOS, default="linreg")
    s.add_argument("--sweep", choices=["strong", "weak"], required=True)
    s.add_argument("--cores-list", required=True, help="comma-separated core counts")
    s.add_argument("--rows", type=int, default=1 << 16, help="total rows (strong sweep)")
    s.add_argument("--rows-per-core", type=int, default=1024, help="rows per core (weak sweep)")
    s.add_argument("--features", type=int, default=8)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--mode", choices=["fixed", "real"], default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--iterations", type=int, default=None)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    s.add_argument("--min-samples", dest="min_samples", type=int, default=None)
    s.add_argument("--n-bins", dest="n_bins", type=int, default=None)
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_scale)

    c = sub.add_parser("lut-check", help="measure sigmoid table error against its bound")
    c.add_argument("--lo", type=float, default=None)
    c.add_argument("--hi", type=float, default=None)
    c.add_argument("--entries", type=int, default=None)
    c.add_argument("--samples", type=int, default=1 << 20)
    c.set_defaults(func=cmd_lut_check)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KernelLaunchError as exc:
        cause = exc.cause
        if isinstance(cause, FixedPointOverflowError):
            print(f"error: fixed-point overflow: {cause}", file=sys.stderr)
            return 4
        if isinstance(cause, CapacityError):
            print(f"error: capacity: {cause}", file=sys.stderr)
            return 3
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FixedPointOverflowError as exc:
        print(f"error: fixed-point overflow: {exc}", file=sys.stderr)
        return 4
    except CapacityError as exc:
        print(f"error: capacity: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, PimmlError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
