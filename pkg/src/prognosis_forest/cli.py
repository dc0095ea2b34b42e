"""Command-line entry point: ``prognosis <subcommand> ...``.

Global flags (--config, --seed, --threads, --out-dir) are accepted before or
after the subcommand.  Exit status is 0 on success, 1 when a run or a
verification fails, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .cohort import Cohort, ParseError, ingest_cohort, load_cohort, save_cohort
from .datasets import (
    TEST,
    TRAIN,
    build_dataset,
    build_day_datasets,
    dataset_filename,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
    split_cohort,
)
from .ensemble import load_model, save_model
from .evaluation import emit_report, evaluate
from .pipeline import ConfigError, PipelineConfig, PipelineError, run_pipeline, verify_run
from .provenance import provenance
from .registry import default_registry, load_registry
from .selection import WIDE_SPACE, SearchSpace, SearchSpec, random_search, write_search_log
from .snapshot import DAY_NAMES, DEFAULT_TREND_THRESHOLD
from .synth import GeneratorSpec, write_cohort_csv
from .uncertainty import apply_threshold

log = logging.getLogger("prognosis")


class UsageError(Exception):
    pass


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=default, help="master seed")
    parser.add_argument(
        "--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
        help="worker processes for the hyperparameter search",
    )
    parser.add_argument("--out-dir", dest="out_dir", default=default, help="output directory")


def _registry(path):
    if path is None:
        return default_registry()
    return load_registry(path)


def _need_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for this command")
    return args.seed


def cmd_synth(args) -> int:
    seed = _need_seed(args)
    fields = {}
    if args.spec:
        fields = GeneratorSpec.from_json(args.spec).to_dict()
    for key, value in (
        ("n_patients", args.patients),
        ("drift_factor", args.drift),
        ("base_mortality", args.mortality),
        ("phase_mix", args.phase_mix),
    ):
        if value is not None:
            fields[key] = value
    fields["seed"] = seed
    spec = GeneratorSpec.from_dict(fields)
    records = write_cohort_csv(spec, args.out)
    print(f"wrote {len(records)} patients to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    registry = _registry(args.registry)
    result = ingest_cohort(args.input, registry)
    for diag in result.rejected:
        print(f"line {diag.line}: rejected: {diag.message}", file=sys.stderr)
    for diag in result.warnings:
        print(f"line {diag.line}: warning: {diag.message}", file=sys.stderr)
    cohort = Cohort(result.records, dt.date.fromisoformat(args.boundary))
    save_cohort(cohort, args.out)
    print(f"{len(result.records)} patients, {len(result.rejected)} rows rejected -> {args.out}")
    return 0


def cmd_split(args) -> int:
    seed = _need_seed(args)
    cohort = load_cohort(args.cohort)
    split = split_cohort(cohort, args.test_fraction, seed)
    save_split(split, args.out)
    print(f"{len(split.ids(TRAIN))} train / {len(split.ids(TEST))} test patients -> {args.out}")
    return 0


def cmd_snapshot(args) -> int:
    cohort = load_cohort(args.cohort)
    ds = build_dataset(cohort.eligible(), args.day, args.form, args.trend, _registry(args.registry))
    save_dataset(ds, args.out)
    print(f"{len(ds)} snapshots x {len(ds.feature_names)} features -> {args.out}")
    return 0


def cmd_build_datasets(args) -> int:
    if args.out_dir is None:
        raise UsageError("--out-dir is required")
    cohort = load_cohort(args.cohort)
    split = load_split(args.split)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = build_day_datasets(
        cohort.phase_records(args.phase), split, args.phase, args.form,
        DAY_NAMES, args.trend, _registry(args.registry),
    )
    for day, (train, test) in pairs.items():
        for ds, side in ((train, TRAIN), (test, TEST)):
            save_dataset(ds, out / dataset_filename(args.phase, args.form, day, side))
    print(f"{2 * len(pairs)} datasets -> {out}")
    return 0


def cmd_train(args) -> int:
    seed = _need_seed(args)
    ds = load_dataset(args.dataset)
    k_folds = args.folds if args.folds == "auto" else int(args.folds)
    space = WIDE_SPACE if args.wide_space else SearchSpace()
    spec = SearchSpec(
        n_configs=args.configs, k_folds=k_folds, max_u=args.max_u,
        n_thresholds=args.n_thresholds, seed=seed, space=space,
    )
    result = random_search(ds, spec, threads=args.threads)
    settings = {
        "command": "train",
        "dataset": Path(args.dataset).name,
        "n_configs": spec.n_configs,
        "k_folds": spec.k_folds,
        "max_u": spec.max_u,
        "n_thresholds": spec.n_thresholds,
        "space": space.to_dict(),
    }
    forest = result.forest
    forest.provenance = provenance(settings, seed)
    save_model(forest, args.out)
    if args.log:
        write_search_log(result, args.log)
    c = result.best_config
    print(
        f"best {c.ensemble_kind} (config {result.best_entry.index}) cv macro-F2 "
        f"{result.best_score:.4f}, threshold {result.best_threshold:.4f}, "
        f"{result.n_failed} failed -> {args.out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    forest = load_model(args.model)
    ds = load_dataset(args.dataset)
    report = evaluate(forest, ds)
    emit_report(report, args.out)
    if args.markdown:
        emit_report(report, args.markdown, format="md")
    print(
        f"macro-F2 {report.complete.macro_f2:.4f}, without uncertain "
        f"{report.no_uncertain.macro_f2:.4f}, uncertain {100 * report.uncertain_fraction:.1f}%"
    )
    return 0


def cmd_predict(args) -> int:
    forest = load_model(args.model)
    ds = load_dataset(args.input, require_labels=False)
    if ds.feature_names != forest.feature_names:
        raise UsageError("input columns do not match the model's features")
    preds = apply_threshold(forest, ds.rows)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "p_alive", "p_dead", "label"])
        for pid, p in zip(ds.patient_ids, preds):
            w.writerow([pid, repr(p.p_alive), repr(p.p_dead), p.label])
    print(f"{len(preds)} predictions -> {args.out}")
    return 0


def _pipeline_config(args) -> PipelineConfig:
    overrides = {"seed": args.seed, "out_dir": args.out_dir}
    if getattr(args, "configs", None) is not None:
        overrides["n_configs"] = args.configs
    if args.config:
        return PipelineConfig.load(args.config, **overrides)
    if args.seed is None:
        raise UsageError("pipeline needs --config or --seed")
    return PipelineConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def cmd_pipeline(args) -> int:
    config = _pipeline_config(args)
    rows = run_pipeline(config, threads=args.threads)
    print((Path(config.out_dir) / "summary.md").read_text(encoding="utf-8"), end="")
    print(f"{len(rows)} models -> {config.out_dir}")
    return 0


def cmd_verify(args) -> int:
    if not args.config:
        raise UsageError("verify needs --config")
    config = _pipeline_config(args)
    problems = verify_run(config, config.out_dir)
    for p in problems:
        print(f"FAIL {p}")
    if problems:
        return 1
    print(f"OK {config.out_dir} matches config hash {config.hash()[:12]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prognosis", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic event CSV")
    p.add_argument("--patients", type=int)
    p.add_argument("--drift", type=float)
    p.add_argument("--mortality", type=float)
    p.add_argument("--phase-mix", dest="phase_mix", type=float)
    p.add_argument("--spec", help="generator spec JSON; flags override its fields")
    p.add_argument("--out", required=True)

    p = add("ingest", cmd_ingest, "validate an event CSV into a cohort file")
    p.add_argument("--input", required=True)
    p.add_argument("--registry")
    p.add_argument("--boundary", default="2020-03-21")
    p.add_argument("--out", required=True)

    p = add("split", cmd_split, "stratified train/test patient split")
    p.add_argument("--cohort", required=True)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)
    p.add_argument("--out", required=True)

    p = add("snapshot", cmd_snapshot, "snapshot every patient at one day config")
    p.add_argument("--cohort", required=True)
    p.add_argument("--day", choices=DAY_NAMES, required=True)
    p.add_argument("--form", choices=("num", "cat"), default="num")
    p.add_argument("--trend", type=float, default=DEFAULT_TREND_THRESHOLD)
    p.add_argument("--registry")
    p.add_argument("--out", required=True)

    p = add("build-datasets", cmd_build_datasets, "train/test datasets for one phase and form")
    p.add_argument("--cohort", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--phase", choices=("hcp", "mcp"), required=True)
    p.add_argument("--form", choices=("num", "cat"), default="num")
    p.add_argument("--trend", type=float, default=DEFAULT_TREND_THRESHOLD)
    p.add_argument("--registry")

    p = add("train", cmd_train, "random search, refit the winner with its threshold")
    p.add_argument("--dataset", required=True)
    p.add_argument("--configs", type=int, default=64)
    p.add_argument("--max-u", dest="max_u", type=float, default=0.25)
    p.add_argument("--folds", default="auto")
    p.add_argument("--n-thresholds", dest="n_thresholds", type=int, default=100)
    p.add_argument("--wide-space", dest="wide_space", action="store_true",
                   help="draw 50..500 trees per ensemble")
    p.add_argument("--out", required=True)
    p.add_argument("--log")

    p = add("evaluate", cmd_evaluate, "score a model on a labelled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown")

    p = add("predict", cmd_predict, "alive/dead/uncertain predictions for snapshots")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    add("verify", cmd_verify, "check a run directory against its config")

    p = add("pipeline", cmd_pipeline, "run every stage end to end")
    p.add_argument("--configs", type=int, help="override configs per search")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: stage {exc}", file=sys.stderr)
        return 1
    except (ParseError, FileNotFoundError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
