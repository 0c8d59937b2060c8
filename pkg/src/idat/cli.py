"""Command-line entry point: ``idat {fit,incremental,ablation,predict,metrics}``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .metrics import ami, ari
from .predict import predict_batch


def parse_seeds(text: str) -> list[int]:
    """``"1..30"`` (inclusive range), ``"3,5,8"`` or a single integer."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(p) for p in text.split("..", 1))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}; use e.g. 1..30 or 1,2,3") from None


def default_seeds() -> list[int]:
    base = int(os.environ.get("IDAT_SEED", "0"))
    return list(range(base, base + harness.DEFAULT_SEED_COUNT))


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="numeric CSV with a class-label column")
    p.add_argument("--label-column", type=int, default=-1, help="label column index (default: last)")
    p.add_argument("--no-header", action="store_true", help="the CSV has no header row")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, help="run a single seed")
    seeds.add_argument("--seeds", type=parse_seeds, help="seed list, e.g. 1..30 or 4,7,9")
    p.add_argument("--output", help="write the JSON report here")
    p.add_argument("--normalize", action="store_true", help="min-max scale features first")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idat", description="Self-adjusting topological clustering experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="stationary protocol: train on all data, score on all data")
    _add_data_args(fit)
    fit.add_argument("--lambda-init", type=int, default=2)
    fit.add_argument("--ablation", choices=harness.ABLATIONS, default="full")
    fit.add_argument("--save-model", help="also save the model trained with the first seed as JSON")

    inc = sub.add_parser("incremental", help="class-incremental protocol with AI/BWT scores")
    _add_data_args(inc)
    inc.add_argument("--lambda-init", type=int, default=2)
    inc.add_argument("--ablation", choices=harness.ABLATIONS, default="full")

    abl = sub.add_parser("ablation", help="all ablation variants under the class-incremental protocol")
    _add_data_args(abl)
    abl.add_argument("--lambda-init", type=int, help="only this initial interval (default: 2 and 500)")

    pred = sub.add_parser("predict", help="label query rows with a saved model")
    pred.add_argument("model", help="model JSON written by fit --save-model")
    pred.add_argument("queries", help="CSV of query features")
    pred.add_argument("--label-column", type=int, help="drop this column from the queries")
    pred.add_argument("--no-header", action="store_true")
    pred.add_argument("--output", help="write labels here, one per line (default: stdout)")

    met = sub.add_parser("metrics", help="ARI and AMI between two label files")
    met.add_argument("labels_true")
    met.add_argument("labels_pred")
    return parser


def _experiment(args, protocol: str, **overrides) -> harness.ExperimentConfig:
    if args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = args.seeds or default_seeds()
    if args.jobs < 1:
        raise ValueError("--jobs must be >= 1")
    fields = dict(protocol=protocol, seeds=seeds, output_path=args.output,
                  normalize=args.normalize, jobs=args.jobs)
    fields.update(overrides)
    return harness.ExperimentConfig(**fields)


def _summary(name: str, report: harness.RunReport) -> str:
    agg = report.aggregates
    parts = [f"{name}:"]
    for key in ("ari", "ami", "ai_ari", "bwt_ari", "n_nodes", "n_clusters"):
        if key in agg:
            parts.append(f"{key}={agg[key]['mean']:.4f}({agg[key]['std']:.4f})")
    return " ".join(parts)


def _emit(reports, args) -> None:
    if isinstance(reports, harness.RunReport):
        print(_summary(reports.dataset, reports))
    else:
        for name, rep in reports.items():
            print(_summary(name, rep))
    if args.output:
        harness.write_report(reports, args.output)


def _read_label_file(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: no labels")
    return np.array(lines)


def _read_queries(args) -> np.ndarray:
    with open(args.queries, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not args.no_header:
        rows = rows[1:]
    out = []
    for i, row in enumerate(rows):
        if args.label_column is not None:
            row = [c for j, c in enumerate(row) if j != args.label_column % len(row)]
        try:
            out.append([float(c) for c in row])
        except ValueError:
            raise ValueError(f"{args.queries}: row {i + 1} has a non-numeric value") from None
    if not out:
        raise ValueError(f"{args.queries}: no query rows")
    return np.array(out)


def _run(args) -> int:
    if args.command == "metrics":
        a, b = _read_label_file(args.labels_true), _read_label_file(args.labels_pred)
        print(f"ARI={ari(a, b):.6f} AMI={ami(a, b):.6f}")
        return 0
    if args.command == "predict":
        model = harness.load_model(args.model)
        labels = predict_batch(model, _read_queries(args))
        text = "\n".join(str(int(v)) for v in labels) + "\n"
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0

    data = harness.load_csv(args.data, has_header=not args.no_header, label_column=args.label_column)
    if args.command == "fit":
        if args.save_model and args.normalize:
            raise ValueError("--save-model cannot be combined with --normalize")
        cfg = _experiment(args, "stationary", ablation=args.ablation, lambda_init=args.lambda_init)
        _emit(harness.run_stationary(data, cfg), args)
        if args.save_model:
            harness.save_model(harness.fit_model(data, cfg, cfg.seeds[0]), args.save_model)
    elif args.command == "incremental":
        cfg = _experiment(args, "nonstationary", ablation=args.ablation, lambda_init=args.lambda_init)
        _emit(harness.run_nonstationary(data, cfg), args)
    else:
        lambdas = harness.ABLATION_LAMBDAS if args.lambda_init is None else (args.lambda_init,)
        cfg = _experiment(args, "nonstationary")
        _emit(harness.run_ablation_suite(data, cfg, lambdas), args)
    return 0


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        return _run(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"idat: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
