"""Command-line interface: ``affectkit <subcommand> ...``.

Exit status: 0 success, 2 usage error, 3 input/schema error, 4 table or
config error, 5 insufficient data for a metric, 6 numerical failure
(divergence, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .coupling import LossWeights
from .gradcheck import TOLERANCE, check_all
from .harness.evaluate import TASKS, EvaluationReport, cer_records, evaluate_records, fairness_records
from .harness.prep import filter_va_expr_consistency, subsample_frames
from .harness.records import RecordError, read_records
from .metrics import MetricError
from .relatedness import TableError, Tables, load_tables
from .trainer import TrainConfig, TrainingDiverged, ablation_summary, load_config, run_ablation, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_DATA = 5
EXIT_NUMERIC = 6

log = logging.getLogger("affectkit")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# Shared helpers
# --------------------------------------------------------------------------


def _tables(args: argparse.Namespace) -> Tables:
    try:
        return load_tables(args.table)
    except FileNotFoundError:
        raise CliError(f"table file not found: {args.table}", EXIT_CONFIG) from None
    except TableError as exc:
        raise CliError(f"invalid table: {exc}", EXIT_CONFIG) from None


def _load_records(args: argparse.Namespace) -> tuple[list, dict[str, Any]]:
    path = Path(args.input)
    if not path.exists():
        raise CliError(f"input file not found: {path}", EXIT_INPUT)
    try:
        records = read_records(path, args.format)
    except RecordError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INPUT) from None
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_INPUT) from None
    prep: dict[str, Any] = {"n_read": len(records)}
    if getattr(args, "clean_va", False):
        records, removed = filter_va_expr_consistency(records)
        prep["va_expr_cleaning_removed"] = len(removed)
        reasons: dict[str, int] = {}
        for _, reason in removed:
            reasons[reason] = reasons.get(reason, 0) + 1
        prep["va_expr_cleaning_reasons"] = reasons
    stride = getattr(args, "stride", 1)
    if stride != 1:
        try:
            records = subsample_frames(records, stride)
        except RecordError as exc:
            raise CliError(str(exc), EXIT_INPUT) from None
        prep["after_subsampling"] = len(records)
    return records, prep


def _tasks(args: argparse.Namespace) -> list[str]:
    tasks = [t.strip() for t in args.tasks.split(",") if t.strip()]
    bad = sorted(set(tasks) - set(TASKS))
    if bad or not tasks:
        raise CliError(f"--tasks must be a comma list drawn from {','.join(TASKS)}; got {args.tasks!r}", EXIT_USAGE)
    return tasks


def _attributes(args: argparse.Namespace) -> list[str]:
    attrs: list[str] = []
    for chunk in args.attribute or []:
        attrs.extend(a.strip() for a in chunk.split(",") if a.strip())
    return attrs


def _echo(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)}


def _emit(report: EvaluationReport, args: argparse.Namespace) -> None:
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.write(out)
        print(f"report written to {out}")


def _fmt(x: Any) -> str:
    return f"{x:.4f}" if isinstance(x, float) else str(x)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_evaluate(args: argparse.Namespace) -> int:
    records, prep = _load_records(args)
    overall, exclusions = evaluate_records(records, _tasks(args))
    exclusions.update(prep)
    report = EvaluationReport("evaluate", overall, [], exclusions, _echo(args))
    attrs = _attributes(args)
    if attrs:
        try:
            report.fairness, skipped = fairness_records(records, attrs, _tasks(args))
        except MetricError as exc:
            raise CliError(str(exc), EXIT_DATA) from None
        exclusions["skipped_fairness"] = skipped
    if not overall:
        raise CliError("no task has records with both labels and predictions", EXIT_DATA)
    if "expr" in overall:
        print(f"expr  macro F1  {_fmt(overall['expr']['macro_f1'])}  (n={overall['expr']['n']})")
    if "au" in overall:
        print(f"au    mean F1   {_fmt(overall['au']['mean_f1'])}  (n={overall['au']['n']})")
    if "va" in overall:
        print(f"va    CCC       {_fmt(overall['va']['ccc'])}  (n={overall['va']['n']})")
    for fr in report.fairness:
        print(f"{fr.metric:5s} {fr.attribute:10s} {_fmt(fr.score)}")
    _emit(report, args)
    return EXIT_OK


def cmd_fairness(args: argparse.Namespace) -> int:
    attrs = _attributes(args)
    if not attrs:
        raise CliError("fairness needs at least one --attribute (age, gender, race)", EXIT_USAGE)
    records, prep = _load_records(args)
    try:
        reports, skipped = fairness_records(records, attrs, _tasks(args))
    except MetricError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    if not reports:
        raise CliError("no fairness metric could be computed: no task has labelled predictions", EXIT_DATA)
    exclusions = dict(prep, skipped_fairness=skipped)
    report = EvaluationReport("fairness", {}, reports, exclusions, _echo(args))
    for fr in reports:
        flag = "" if fr.fair is None else ("fair" if fr.fair else "biased")
        print(f"{fr.metric:5s} {fr.attribute:10s} {_fmt(fr.score)}  {flag}")
    _emit(report, args)
    return EXIT_OK


def cmd_cer(args: argparse.Namespace) -> int:
    tables = _tables(args)
    records, prep = _load_records(args)
    try:
        preds, summary = cer_records(records, tables.compounds)
    except MetricError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    report = EvaluationReport(
        "cer",
        {"cer": summary},
        [],
        prep,
        _echo(args),
        {"predictions": preds, "compound_table": tables.compounds.to_dict()},
    )
    print(f"scored {summary['n_scored']} records ({summary['n_skipped']} skipped)")
    for key in ("accuracy", "macro_f1", "average_accuracy"):
        if key in summary:
            print(f"{key:17s} {_fmt(summary[key])}")
    _emit(report, args)
    return EXIT_OK


def cmd_check_grads(args: argparse.Namespace) -> int:
    tables = _tables(args)
    worst = check_all(args.instances, args.seed, table=tables.relatedness)
    passed = all(v < TOLERANCE for v in worst.values())
    for name, err in worst.items():
        print(f"{name:12s} max rel err {err:.3e}  {'ok' if err < TOLERANCE else 'FAIL'}")
    report = EvaluationReport(
        "check-grads",
        {"max_relative_error": worst, "tolerance": TOLERANCE, "passed": passed},
        config=_echo(args),
    )
    _emit(report, args)
    return EXIT_OK if passed else EXIT_NUMERIC


def _train_config(args: argparse.Namespace) -> TrainConfig:
    try:
        config = load_config(args.config) if args.config else TrainConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed, synth=replace(config.synth, seed=args.seed))
        if args.lambdas is not None:
            config = replace(config, weights=LossWeights.from_sequence(args.lambdas))
        if args.epochs is not None:
            config = replace(config, epochs=args.epochs)
    except FileNotFoundError:
        raise CliError(f"config file not found: {args.config}", EXIT_CONFIG) from None
    except (ValueError, TypeError) as exc:
        raise CliError(f"invalid training config: {exc}", EXIT_CONFIG) from None
    return config


def cmd_train_toy(args: argparse.Namespace) -> int:
    tables = _tables(args)
    config = _train_config(args)
    try:
        _, history = train(config, tables.relatedness)
    except TrainingDiverged as exc:
        raise CliError(f"training diverged: {exc}", EXIT_NUMERIC) from None
    for rec in history.epochs:
        print(
            f"epoch {rec['epoch']:3d}  loss {rec['loss_total']:.4f}  F1 {rec['val_macro_f1']:.4f}  "
            f"AU-F1 {rec['val_mean_au_f1']:.4f}  CCC {rec['val_ccc']:.4f}  consistency {rec['consistency']:.4f}"
        )
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        history.write(out)
        print(f"history written to {out}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    tables = _tables(args)
    config = _train_config(args)
    try:
        histories = run_ablation(config, tables.relatedness)
    except TrainingDiverged as exc:
        raise CliError(f"training diverged: {exc}", EXIT_NUMERIC) from None
    rows = ablation_summary(histories)
    header = f"{'run':24s} {'consistency':>11s} {'macro F1':>9s} {'AU F1':>7s} {'CCC':>7s}"
    print(header)
    for row in rows:
        print(
            f"{row['run']:24s} {row['consistency']:11.4f} {row['val_macro_f1']:9.4f} "
            f"{row['val_mean_au_f1']:7.4f} {row['val_ccc']:7.4f}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for label, hist in histories.items():
            hist.write(out / f"history_{label}.json")
        (out / "summary.json").write_text(
            json.dumps({"schema_version": 1, "tool_version": __version__, "rows": rows}, indent=2) + "\n"
        )
        print(f"histories and summary written to {out}/")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectkit", description="Facial-behaviour loss checks, evaluation, fairness and zero-shot CER."
    )
    parser.add_argument("--version", action="version", version=f"affectkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def records_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--input", required=True, help="records file (JSON Lines or CSV)")
        p.add_argument("--format", choices=("jsonl", "csv"), help="default: from the file suffix")
        p.add_argument("--stride", type=_positive_int, default=1, help="keep every N-th frame per video")
        p.add_argument("--clean-va", action="store_true", help="drop records with inconsistent expression/VA labels")
        p.add_argument("--out", help="write the JSON report here")

    def table_arg(p: argparse.ArgumentParser) -> None:
        p.add_argument("--table", help="relatedness/compound table override (YAML or JSON)")

    def train_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="training config document (YAML or JSON)")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=_positive_int)
        p.add_argument(
            "--lambda",
            dest="lambdas",
            type=float,
            nargs=5,
            metavar=("EXPR", "AU", "VA", "DM", "SCA"),
            help="the five loss weights",
        )
        table_arg(p)

    p = sub.add_parser("evaluate", help="overall metrics (optionally with fairness)")
    records_args(p)
    p.add_argument("--tasks", default=",".join(TASKS))
    p.add_argument("--attribute", action="append", help="also compute fairness for these attributes")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fairness", help="EOP / EOD / fCCC per demographic attribute")
    records_args(p)
    p.add_argument("--tasks", default=",".join(TASKS))
    p.add_argument("--attribute", action="append", help="age, gender or race (repeatable or comma list)")
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("cer", help="zero-shot compound expression recognition")
    records_args(p)
    table_arg(p)
    p.set_defaults(func=cmd_cer)

    p = sub.add_parser("check-grads", help="finite-difference check of all loss gradients")
    p.add_argument("--instances", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    table_arg(p)
    p.set_defaults(func=cmd_check_grads)

    p = sub.add_parser("train-toy", help="train the toy multi-task model on synthetic data")
    train_args(p)
    p.add_argument("--out", help="write the history JSON here")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("ablate", help="coupling-loss ablation grid on synthetic data")
    train_args(p)
    p.add_argument("--out", help="directory for the four histories and the summary")
    p.set_defaults(func=cmd_ablate)
    return parser


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"affectkit {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
