"""Command line interface.

Exit codes: 0 success, 1 bad request/configuration, 2 malformed input data,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._version import __version__
from .crossval import TASK_COMBOS
from .dataset import GRANULARITIES, build_catalog
from .errors import ConfigError, DataError, SurgactError
from .runner import (
    ExperimentConfig,
    combine_reports,
    load_experiment_config,
    plan_folds,
    run_experiment,
    run_single_fold,
)
from .synth import generate_synthetic_dataset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


def _add_experiment_args(p: argparse.ArgumentParser, *, need_config: bool) -> None:
    if need_config:
        p.add_argument("--config", help="JSON experiment config file")
    p.add_argument("--catalog", help="catalog manifest path")
    p.add_argument("--granularity", choices=GRANULARITIES)
    p.add_argument("--cv", choices=("louo", "loto", "loto-suite"))
    p.add_argument("--tasks", nargs="+", help="explicit task list (louo)")
    p.add_argument("--task-combo", choices=sorted(TASK_COMBOS),
                   help="named task selection (louo)")
    p.add_argument("--test-task", help="held-out task (loto)")
    p.add_argument("--train-tasks", nargs="+", help="training tasks (loto)")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--kernel-size", type=int,
                   help="override the derived kernel width (odd)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--expected-channels", type=int)
    p.add_argument("--output-dir")


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "catalog": args.catalog,
        "granularity": args.granularity,
        "cv": args.cv,
        "tasks": tuple(args.tasks) if args.tasks else None,
        "task_combo": args.task_combo,
        "test_task": args.test_task,
        "train_tasks": tuple(args.train_tasks) if args.train_tasks else None,
        "learning_rate": args.learning_rate,
        "weight_decay": args.weight_decay,
        "epochs": args.epochs,
        "kernel_size": args.kernel_size,
        "seed": args.seed,
        "workers": args.workers,
        "expected_channels": args.expected_channels,
        "output_dir": args.output_dir,
    }
    if getattr(args, "config", None):
        return load_experiment_config(args.config, **overrides)
    present = {k: v for k, v in overrides.items() if v is not None}
    missing = {"catalog", "granularity", "cv"} - set(present)
    if missing:
        raise ConfigError(
            f"missing required options (or pass --config): {sorted(missing)}")
    return ExperimentConfig(**present)


def _cmd_validate(args) -> int:
    from .dataset import load_trial_kinematics, load_transcript
    from .runner import _scan_transcript_labels

    catalog = build_catalog(args.catalog)
    checked = 0
    for entry in catalog.entries:
        trial = load_trial_kinematics(
            entry.kinematics, args.expected_channels,
            task=entry.task, subject=entry.subject, trial=entry.trial)
        for granularity, path in entry.transcripts:
            vocab = sorted(_scan_transcript_labels(path))
            load_transcript(path, vocab, trial.num_frames, granularity)
        checked += 1
    print(f"ok: {checked} trials, {len(catalog.tasks())} tasks "
          f"({', '.join(catalog.tasks())})")
    return EXIT_OK


def _cmd_folds(args) -> int:
    config = _experiment_config(args)
    catalog = build_catalog(config.catalog)
    plans = plan_folds(config, catalog)
    doc = [
        {
            "name": p.name,
            "held_out": p.held_out,
            "num_train_trials": len(p.train_trials),
            "num_test_trials": len(p.test_trials),
            "train_trials": ["/".join(k) for k in p.train_trials],
            "test_trials": ["/".join(k) for k in p.test_trials],
        }
        for p in plans
    ]
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"{len(plans)} folds -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _experiment_config(args)
    payload, _ = run_single_fold(config, args.fold, checkpoint=args.checkpoint)
    out = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(out)
        print(f"fold report -> {args.out}")
    else:
        sys.stdout.write(out)
    if payload["status"] != "ok":
        print(f"fold {payload['name']} {payload['status']}: {payload['error']}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config = _experiment_config(args)
    # run_experiment itself persists the report when output_dir is set
    report = run_experiment(config)
    agg = report.aggregate
    if config.output_dir:
        print(f"report written under {config.output_dir}")
    summary = f"folds: {agg['num_ok_folds']}/{agg['num_folds']} ok"
    if agg["accuracy_mean"] is not None:
        summary += (f"; accuracy {agg['accuracy_mean']:.2f}"
                    f", edit {agg['edit_score_mean']:.2f}")
    print(summary)
    return EXIT_OK


def _cmd_synth(args) -> int:
    manifest = generate_synthetic_dataset(
        args.out,
        num_tasks=args.tasks,
        num_subjects=args.subjects,
        trials_per_subject=args.trials_per_subject,
        num_classes=args.classes,
        frames_range=(args.min_frames, args.max_frames),
        seed=args.seed,
    )
    print(str(manifest))
    return EXIT_OK


def _cmd_report(args) -> int:
    text = combine_reports(args.inputs)
    if args.out:
        Path(args.out).write_text(text)
        print(f"combined table -> {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgact",
        description="Surgical activity recognition experiments on kinematic data")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check every catalog file parses cleanly")
    p.add_argument("--catalog", required=True)
    p.add_argument("--expected-channels", type=int)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("folds", help="emit cross-validation fold plans")
    _add_experiment_args(p, need_config=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_folds)

    p = sub.add_parser("train", help="train a single fold")
    _add_experiment_args(p, need_config=True)
    p.add_argument("--fold", required=True, help="fold name from `folds`")
    p.add_argument("--checkpoint", help="write the trained model here (.npz)")
    p.add_argument("--out", help="write the fold report JSON here")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("experiment", help="run all folds and report")
    _add_experiment_args(p, need_config=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", type=int, default=2)
    p.add_argument("--subjects", type=int, default=3)
    p.add_argument("--trials-per-subject", type=int, default=2)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--min-frames", type=int, default=280)
    p.add_argument("--max-frames", type=int, default=320)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="combine report.json files into one table")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SurgactError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
