"""Command-line entry point: ``rpad run | sweep | verify-theory | make-synthetic``.

Exit status is 0 when the command completed (a run whose classifier never hit
the accuracy threshold still completes, flagged in its report), 1 on a
pipeline failure (message prefixed with the failing stage) and 2 on usage
errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from rpad.data import (
    LabeledDataset,
    dumps_record,
    load_csv,
    make_synthetic_benchmark,
    write_atomic,
    write_csv,
    write_report,
)
from rpad.errors import RpadError
from rpad.experiment import SWEEP_AXES, ExperimentConfig, StageError, run_experiment, sweep
from rpad.theory import verify

logger = logging.getLogger("rpad")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _eta(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("eta must be a number or 'auto'") from exc
    if not math.isfinite(value) or value < 0:
        raise argparse.ArgumentTypeError("eta must be finite and >= 0")
    return value


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV feature matrix")
    p.add_argument("--label-col", help="class-label column (header name or index)")
    p.add_argument("--inlier-class", type=int, help="one-class task: inlier class")
    p.add_argument("--p", type=float, help="one-class task: outlier/inlier ratio")
    p.add_argument("--outlier-classes", type=_int_list, help="fixed split: comma-separated anomaly classes")
    p.add_argument("--missing", action="append", default=[], metavar="TOKEN",
                   help="cell token treated as missing and imputed as 0 (repeatable)")
    p.add_argument("--standardize", action="store_true", help="z-score columns before L2 normalization")
    p.add_argument("--m", type=int, default=256, help="number of random projections")
    p.add_argument("--k", type=int, default=256, help="projected dimension")
    p.add_argument("--mu", type=float, default=0.6, help="batch-accuracy early-stopping threshold")
    p.add_argument("--eta", type=_eta, default=1e3, help="perturbation magnitude, or 'auto'")
    p.add_argument("--eta-scale", type=float, default=1.0, help="numerator c of eta=auto (c / median grad norm)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--output", help="output location")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rpad", description="Random-projection self-supervised anomaly scoring.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="score a dataset for each seed and aggregate")
    _add_pipeline_flags(run)

    sw = sub.add_parser("sweep", help="repeat `run` over values of one hyperparameter")
    _add_pipeline_flags(sw)
    sw.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sw.add_argument("--values", required=True, help="comma-separated values")

    vt = sub.add_parser("verify-theory", help="Monte-Carlo check of the projection concentration bounds")
    vt.add_argument("--epsilon", type=float, default=0.5)
    vt.add_argument("--delta", type=float, default=0.1)
    vt.add_argument("--trials", type=int, default=10_000)
    vt.add_argument("--d", type=int, default=512)
    vt.add_argument("--seed", type=int, default=0)
    vt.add_argument("--output")

    syn = sub.add_parser("make-synthetic", help="write the synthetic benchmark source as CSV")
    syn.add_argument("--output", required=True)
    syn.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        m=args.m, k=args.k, mu=args.mu, eta=args.eta, eta_scale=args.eta_scale, lr=args.lr,
        weight_decay=args.weight_decay, batch_size=args.batch_size, max_epochs=args.max_epochs,
        seeds=list(args.seeds), p=args.p, inlier_class=args.inlier_class,
        outlier_classes=args.outlier_classes, standardize=args.standardize, input=args.input,
        label_col=args.label_col, missing_values=list(args.missing), output=args.output,
    )


def _load(config: ExperimentConfig) -> LabeledDataset:
    try:
        return load_csv(config.input, config.label_col, missing_values=config.missing_values)
    except (OSError, RpadError) as exc:
        raise StageError("load", exc) from exc


def _summary_lines(agg: dict) -> list[str]:
    lines = []
    for key, label in (("metrics", "perturbed"), ("metrics_unperturbed", "unperturbed")):
        for name, stats in agg[key].items():
            lines.append(f"{label:12s} {name:6s} {stats['mean']:.4f} +- {stats['std']:.4f}")
    if agg["non_converged_seeds"]:
        lines.append(f"warning: accuracy threshold not reached for seeds {agg['non_converged_seeds']}")
    return lines


def cmd_run(args) -> int:
    config = config_from_args(args)
    ds = _load(config)
    reports, agg = run_experiment(ds, config)
    if config.output:
        out = Path(config.output)
        for r in reports:
            write_report(r, out / f"seed_{r.seed}.json")
        write_atomic(out / "aggregate.json", dumps_record(agg))
    else:
        sys.stdout.write(dumps_record(agg))
    for line in _summary_lines(agg):
        print(line, file=sys.stderr)
    return 0


def _sweep_values(axis: str, text: str) -> list:
    parts = [t.strip() for t in text.split(",") if t.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("--values must list at least one value")
    if axis in ("k", "m"):
        return [int(t) for t in parts]
    if axis == "eta":
        return [_eta(t) for t in parts]
    return [float(t) for t in parts]


def cmd_sweep(args, parser) -> int:
    try:
        values = _sweep_values(args.axis, args.values)
    except (argparse.ArgumentTypeError, ValueError) as exc:
        parser.error(str(exc))
    config = config_from_args(args)
    ds = _load(config)
    rows = sweep(ds, config, args.axis, values)
    buf = io.StringIO()
    header = list(rows[0].keys())
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.output:
        write_atomic(args.output, buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_verify_theory(args, parser) -> int:
    if args.trials < 1:
        parser.error("--trials must be >= 1")
    try:
        reports = verify(args.epsilon, args.delta, args.trials, args.d, args.seed)
    except RpadError as exc:
        raise StageError("verify-theory", exc) from exc
    slack = 3.0 * math.sqrt(args.delta / args.trials)
    record = {"epsilon": args.epsilon, "delta": args.delta, "trials": args.trials, "d": args.d,
              "seed": args.seed, "slack": slack, "reports": {}}
    for variant, rep in reports.items():
        entry = rep.to_dict()
        entry["within_bound"] = rep.violation_rate <= args.delta + slack
        record["reports"][variant] = entry
    text = dumps_record(record)
    if args.output:
        write_atomic(args.output, text)
    sys.stdout.write(text)
    return 0


def cmd_make_synthetic(args) -> int:
    ds = make_synthetic_benchmark(args.seed)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.output, ds)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args, parser)
        if args.command == "verify-theory":
            return cmd_verify_theory(args, parser)
        return cmd_make_synthetic(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RpadError as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
