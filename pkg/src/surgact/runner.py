"""Experiment orchestration: configuration, fold execution, and reports.

An experiment is: a catalog, a label granularity, a cross-validation setup
(LOUO, a single LOTO split, or the full LOTO suite), and model settings.
Each fold derives its own RNG seed from the experiment seed and the fold
name, computes its kernel width from its own training transcripts, trains a
fresh model, and scores the held-out trials. Report payloads are fully
deterministic for a given catalog and config; wall-clock numbers live in a
separate "timing" subtree so two identical runs produce byte-identical
payloads once timing is dropped.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._version import __version__
from .crossval import (
    FoldPlan,
    check_gesture_transfer,
    loto_folds,
    loto_suite,
    louo_folds,
    resolve_task_combo,
)
from .dataset import (
    COLUMNS_PER_ARM,
    DEFAULT_SAMPLE_RATE,
    GRANULARITIES,
    IDLE,
    Catalog,
    FeatureSpec,
    KinematicTrial,
    LabelTranscript,
    MotionPrimitiveLabel,
    TrialKey,
    arm_columns_at,
    both_arms_spec,
    build_catalog,
    encode_frames,
    load_transcript,
    load_trial_kinematics,
    mp_verb,
    select_features,
    split_by_arm,
)
from .errors import (
    DataError,
    FoldFailure,
    InvalidConfig,
    IoFailure,
    MissingTranscript,
    NoDefinedClasses,
    NonFiniteLoss,
)
from .metrics import (
    edit_score,
    frame_accuracy,
    map_report,
    pooled_class_average_precisions,
    run_length_segments,
)
from .tcn import (
    DEFAULT_EPOCHS,
    HYPERPARAM_DEFAULTS,
    ModelConfig,
    TcnModel,
    TrialTensors,
    build_model,
    compute_kernel_size,
    predict_labels,
    save_model,
    train_fold,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "TrialDataSource",
    "load_experiment_config",
    "derive_fold_seed",
    "plan_folds",
    "experiment_vocabulary",
    "run_fold",
    "run_experiment",
    "run_single_fold",
    "emit_report",
    "load_report",
    "combine_reports",
]

CV_MODES = ("louo", "loto", "loto-suite")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    catalog: str
    granularity: str
    cv: str
    tasks: Optional[tuple[str, ...]] = None
    task_combo: Optional[str] = None
    test_task: Optional[str] = None
    train_tasks: Optional[tuple[str, ...]] = None
    learning_rate: Optional[float] = None  # None -> default for the cv mode
    weight_decay: Optional[float] = None
    epochs: int = DEFAULT_EPOCHS
    filters: tuple[int, int, int] = (32, 64, 96)
    kernel_size: Optional[int] = None  # None -> derived per fold
    seed: int = 0
    workers: int = 1
    expected_channels: Optional[int] = None
    left_offset: int = 0
    right_offset: int = COLUMNS_PER_ARM
    output_dir: Optional[str] = None

    def __post_init__(self):
        for name in ("tasks", "train_tasks"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))
        if not isinstance(self.filters, tuple):
            object.__setattr__(self, "filters", tuple(self.filters))
        if self.granularity not in GRANULARITIES:
            raise InvalidConfig(f"unknown granularity: {self.granularity!r}")
        if self.cv not in CV_MODES:
            raise InvalidConfig(f"cv must be one of {CV_MODES}, got {self.cv!r}")
        if self.cv == "louo":
            if (self.tasks is None) == (self.task_combo is None):
                raise InvalidConfig("louo needs exactly one of tasks / task_combo")
            if self.test_task or self.train_tasks:
                raise InvalidConfig("test_task/train_tasks are for loto runs")
        elif self.cv == "loto":
            if not self.test_task or not self.train_tasks:
                raise InvalidConfig("loto needs test_task and train_tasks")
            if self.tasks or self.task_combo:
                raise InvalidConfig("tasks/task_combo are for louo runs")
        else:  # loto-suite
            if any((self.tasks, self.task_combo, self.test_task, self.train_tasks)):
                raise InvalidConfig("loto-suite takes no task arguments")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be > 0")
        if self.weight_decay is not None and self.weight_decay < 0:
            raise InvalidConfig("weight_decay must be >= 0")
        if self.epochs < 0:
            raise InvalidConfig("epochs must be >= 0")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")
        if self.kernel_size is not None and (
                self.kernel_size < 1 or self.kernel_size % 2 == 0):
            raise InvalidConfig("kernel_size override must be odd")

    @property
    def hyperparam_mode(self) -> str:
        return "louo" if self.cv == "louo" else "loto"

    @property
    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return HYPERPARAM_DEFAULTS[self.hyperparam_mode]["learning_rate"]

    @property
    def resolved_weight_decay(self) -> float:
        if self.weight_decay is not None:
            return self.weight_decay
        return HYPERPARAM_DEFAULTS[self.hyperparam_mode]["weight_decay"]

    def feature_spec(self) -> FeatureSpec:
        if self.granularity in ("gesture", "mp"):
            return both_arms_spec(self.left_offset, self.right_offset)
        if self.granularity == "mp-left":
            return FeatureSpec(arms=(arm_columns_at(self.left_offset),))
        return FeatureSpec(arms=(arm_columns_at(self.right_offset),))


_CONFIG_FIELDS = {
    "catalog", "granularity", "cv", "tasks", "task_combo", "test_task",
    "train_tasks", "learning_rate", "weight_decay", "epochs", "filters",
    "kernel_size", "seed", "workers", "expected_channels", "left_offset",
    "right_offset", "output_dir",
}


def load_experiment_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON config file; keyword overrides (CLI flags) win.

    Relative catalog/output paths resolve against the config file's
    directory.
    """
    p = Path(path)
    if not p.is_file():
        raise InvalidConfig(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config file is not valid JSON: {p}: {exc}")
    if not isinstance(doc, dict):
        raise InvalidConfig(f"config file must hold a JSON object: {p}")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    merged = dict(doc)
    for key, value in overrides.items():
        if key not in _CONFIG_FIELDS:
            raise InvalidConfig(f"unknown config override: {key}")
        if value is not None:
            merged[key] = value
    missing = {"catalog", "granularity", "cv"} - set(merged)
    if missing:
        raise InvalidConfig(f"config lacks required keys: {sorted(missing)}")
    for key in ("catalog", "output_dir"):
        if merged.get(key) is not None and not Path(merged[key]).is_absolute():
            merged[key] = str((p.parent / merged[key]).resolve())
    return ExperimentConfig(**merged)


def derive_fold_seed(seed: int, fold_name: str) -> int:
    """Stable per-fold seed: folds get decorrelated streams and renaming or
    reordering folds never silently changes another fold's draw."""
    digest = hashlib.sha256(f"{seed}:{fold_name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def plan_folds(config: ExperimentConfig, catalog: Catalog) -> list[FoldPlan]:
    """Resolve the config's cross-validation request into fold plans."""
    if config.cv == "louo":
        tasks = (resolve_task_combo(config.task_combo)
                 if config.task_combo else config.tasks)
        if config.granularity == "gesture":
            check_gesture_transfer(catalog, tasks)
        return louo_folds(catalog, tasks)
    if config.cv == "loto":
        return [loto_folds(catalog, config.test_task, config.train_tasks,
                           config.granularity)]
    return loto_suite(catalog, config.granularity)


# ---------------------------------------------------------------------------
# vocabulary

def _scan_transcript_labels(path: Path) -> set[str]:
    labels = set()
    for raw in path.read_text().splitlines():
        parts = raw.strip().split(None, 2)
        if len(parts) == 3:
            labels.add(parts[2].strip())
    return labels


def experiment_vocabulary(catalog: Catalog, keys: Sequence[TrialKey],
                          granularity: str) -> tuple[str, ...]:
    """The fixed class list for an experiment: every label appearing at the
    granularity across the involved trials, sorted; MP granularities always
    include Idle (the gap/off-arm label). The output layer keeps this size
    on every fold, so a class missing from some fold's training data stays
    predictable-in-principle rather than silently dropped."""
    labels: set[str] = set()
    side = {"mp-left": "L", "mp-right": "R"}.get(granularity)
    for key in keys:
        entry = catalog.get(*key)
        path = entry.transcript_path(granularity)
        if path is not None:
            labels |= _scan_transcript_labels(path)
            continue
        if side is None:
            raise MissingTranscript(
                f"trial {key} declares no {granularity!r} transcript")
        mp_path = entry.transcript_path("mp")
        if mp_path is None:
            raise MissingTranscript(
                f"trial {key} declares neither {granularity!r} nor 'mp' transcripts")
        for label in _scan_transcript_labels(mp_path):
            mp = MotionPrimitiveLabel.parse(label)
            if mp.tool == side:
                labels.add(label)
    if granularity != "gesture":
        labels.add(IDLE)
    if not labels:
        raise DataError(f"no {granularity!r} labels found in the selected trials")
    return tuple(sorted(labels))


# ---------------------------------------------------------------------------
# per-trial data access

class TrialDataSource:
    """Lazy, cached access to per-trial arrays, with an access log.

    The log (`events`) records every kinematics/transcript/feature access
    and explicit phase marks, so tests can prove training never touched a
    held-out trial. Thread-safe; caching keeps LOUO's repeated training
    reads cheap.
    """

    def __init__(self, catalog: Catalog, granularity: str,
                 feature_spec: FeatureSpec, vocabulary: Sequence[str], *,
                 expected_channels: Optional[int] = None,
                 sample_rate: float = DEFAULT_SAMPLE_RATE):
        self.catalog = catalog
        self.granularity = granularity
        self.feature_spec = feature_spec
        self.vocabulary = tuple(vocabulary)
        self.label_to_id = {lab: i for i, lab in enumerate(self.vocabulary)}
        self.expected_channels = expected_channels
        self.sample_rate = sample_rate
        self.events: list[tuple[str, str]] = []
        self._trials: dict[TrialKey, KinematicTrial] = {}
        self._transcripts: dict[TrialKey, LabelTranscript] = {}
        self._lock = threading.Lock()

    def mark(self, note: str) -> None:
        with self._lock:
            self.events.append(("mark", note))

    def _log(self, kind: str, key: TrialKey) -> None:
        with self._lock:
            self.events.append((kind, "/".join(key)))

    def _trial(self, key: TrialKey) -> KinematicTrial:
        with self._lock:
            cached = self._trials.get(key)
        if cached is not None:
            return cached
        entry = self.catalog.get(*key)
        self._log("kinematics", key)
        trial = load_trial_kinematics(
            entry.kinematics, self.expected_channels,
            task=entry.task, subject=entry.subject, trial=entry.trial,
            sample_rate=self.sample_rate)
        with self._lock:
            self._trials[key] = trial
        return trial

    def transcript(self, key: TrialKey) -> LabelTranscript:
        with self._lock:
            cached = self._transcripts.get(key)
        if cached is not None:
            return cached
        self._log("transcript", key)
        entry = self.catalog.get(*key)
        length = self._trial(key).num_frames
        path = entry.transcript_path(self.granularity)
        if path is not None:
            out = load_transcript(path, self.vocabulary, length, self.granularity)
        else:
            side = {"mp-left": 0, "mp-right": 1}.get(self.granularity)
            mp_path = entry.transcript_path("mp")
            if side is None or mp_path is None:
                raise MissingTranscript(
                    f"trial {key} declares no {self.granularity!r} transcript")
            # derive the arm view from the combined transcript, then rebind
            # it to the experiment vocabulary
            raw_vocab = sorted(_scan_transcript_labels(mp_path) | {IDLE})
            combined = load_transcript(mp_path, raw_vocab, length, "mp")
            derived = split_by_arm(combined)[side]
            out = LabelTranscript(
                granularity=self.granularity,
                vocabulary=self.vocabulary,
                segments=derived.segments,
                length=derived.length,
            )
        with self._lock:
            self._transcripts[key] = out
        return out

    def features(self, key: TrialKey) -> np.ndarray:
        self._log("features", key)
        return select_features(self._trial(key), self.feature_spec)

    def tensors(self, key: TrialKey) -> TrialTensors:
        transcript = self.transcript(key)
        feats = self.features(key)
        if self.granularity == "gesture":
            targets, mask = encode_frames(transcript, self.label_to_id, fill=None)
            return TrialTensors(features=feats, targets=targets, mask=mask)
        targets, _ = encode_frames(transcript, self.label_to_id, fill=IDLE)
        return TrialTensors(features=feats, targets=targets, mask=None)


# ---------------------------------------------------------------------------
# fold execution

def run_fold(fold: FoldPlan, source: TrialDataSource,
             config: ExperimentConfig) -> tuple[dict, Optional[TcnModel]]:
    """Train and evaluate one fold; returns (payload, model).

    A non-finite training loss marks the fold "diverged" instead of raising:
    the payload records the error and the fold is skipped by aggregation.
    """
    fold_seed = derive_fold_seed(config.seed, fold.name)
    vocab = source.vocabulary
    train_transcripts = [source.transcript(k) for k in fold.train_trials]
    kernel = (config.kernel_size if config.kernel_size is not None
              else compute_kernel_size(train_transcripts))
    model_config = ModelConfig(
        num_classes=len(vocab),
        kernel_size=kernel,
        filters=config.filters,
        learning_rate=config.resolved_learning_rate,
        weight_decay=config.resolved_weight_decay,
        epochs=config.epochs,
        seed=fold_seed,
    )
    model = build_model(model_config, source.feature_spec.num_features)
    train_data = {key: source.tensors(key) for key in fold.train_trials}

    payload: dict = {
        "name": fold.name,
        "held_out": fold.held_out,
        "seed": fold_seed,
        "kernel_size": kernel,
        "num_classes": len(vocab),
        "num_train_trials": len(fold.train_trials),
        "num_test_trials": len(fold.test_trials),
        "status": "ok",
        "error": None,
        "training": None,
        "metrics": None,
        "map": None,
    }

    source.mark(f"{fold.name}:train-begin")
    try:
        record = train_fold(model, fold, train_data, model_config)
    except NonFiniteLoss as exc:
        source.mark(f"{fold.name}:train-end")
        payload["status"] = "diverged"
        payload["error"] = str(exc)
        return payload, model
    source.mark(f"{fold.name}:train-end")
    payload["training"] = {
        "epoch_losses": list(record.epoch_mean_losses),
        "epoch_accuracies": list(record.epoch_frame_accuracies),
        "steps": record.num_steps,
    }

    if source.granularity == "gesture":
        collapse = None
        group_of = {lab: lab for lab in vocab}
    else:
        collapse = {lab: mp_verb(lab) for lab in vocab}
        group_of = collapse

    per_trial: dict[str, dict] = {}
    pooled: list[tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]] = []
    support: Counter = Counter()
    accs: list[float] = []
    edits: list[float] = []
    for key in fold.test_trials:
        tensors = source.tensors(key)
        pred, scores = predict_labels(model, tensors.features)
        keep = (tensors.mask if tensors.mask is not None
                else np.ones(pred.shape[0], dtype=bool))
        pred_kept = pred[keep].tolist()
        ref_kept = tensors.targets[keep].tolist()
        acc = frame_accuracy(pred_kept, ref_kept)
        edit = edit_score(pred_kept, ref_kept)
        accs.append(acc)
        edits.append(edit)
        per_trial["/".join(key)] = {
            "accuracy": acc,
            "edit_score": edit,
            "frames": int(pred.shape[0]),
            "labeled_frames": int(keep.sum()),
        }
        pooled.append((scores, tensors.targets, tensors.mask))
        for _, _, label_id in run_length_segments(ref_kept):
            support[group_of[vocab[label_id]]] += 1

    payload["metrics"] = {
        "accuracy_mean": float(np.mean(accs)),
        "edit_score_mean": float(np.mean(edits)),
        "per_trial": per_trial,
    }
    ap = pooled_class_average_precisions(pooled, vocab, collapse)
    try:
        summary = map_report(ap, support)
    except NoDefinedClasses:
        summary = None
    if summary is not None:
        payload["map"] = {
            "per_class": {c: v for c, v in summary.per_class},
            "support": {c: s for c, s in summary.support},
            "macro": summary.macro,
            "micro": summary.micro,
        }
    return payload, model


def _aggregate(fold_payloads: Sequence[dict]) -> dict:
    ok = [f for f in fold_payloads if f["status"] == "ok"]
    agg: dict = {
        "num_folds": len(fold_payloads),
        "num_ok_folds": len(ok),
        "num_diverged_folds": sum(1 for f in fold_payloads if f["status"] == "diverged"),
        "accuracy_mean": None,
        "edit_score_mean": None,
        "map_macro_mean": None,
        "map_micro_mean": None,
        "per_class_ap_mean": {},
        "per_class_support_total": {},
    }
    if not ok:
        return agg
    agg["accuracy_mean"] = float(np.mean([f["metrics"]["accuracy_mean"] for f in ok]))
    agg["edit_score_mean"] = float(np.mean([f["metrics"]["edit_score_mean"] for f in ok]))
    with_map = [f for f in ok if f["map"] is not None]
    if with_map:
        agg["map_macro_mean"] = float(np.mean([f["map"]["macro"] for f in with_map]))
        agg["map_micro_mean"] = float(np.mean([f["map"]["micro"] for f in with_map]))
        classes: list[str] = []
        for f in with_map:
            for c in f["map"]["per_class"]:
                if c not in classes:
                    classes.append(c)
        for c in sorted(classes):
            values = [f["map"]["per_class"][c] for f in with_map
                      if f["map"]["per_class"].get(c) is not None]
            agg["per_class_ap_mean"][c] = float(np.mean(values)) if values else None
            agg["per_class_support_total"][c] = int(sum(
                f["map"]["support"].get(c, 0) for f in with_map))
    return agg


@dataclass(frozen=True)
class ExperimentReport:
    """Deterministic experiment outcome plus a segregated timing subtree."""

    version: str
    experiment: dict
    folds: tuple[dict, ...]
    aggregate: dict
    timing: dict

    def payload(self, include_timing: bool = True) -> dict:
        out = {
            "version": self.version,
            "experiment": self.experiment,
            "folds": list(self.folds),
            "aggregate": self.aggregate,
        }
        if include_timing:
            out["timing"] = self.timing
        return out

    def json_bytes(self, include_timing: bool = True) -> bytes:
        return (json.dumps(self.payload(include_timing), sort_keys=True,
                           indent=2) + "\n").encode()


def _read_sample_rate(manifest_path) -> float:
    try:
        doc = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError):
        return DEFAULT_SAMPLE_RATE
    if isinstance(doc, dict) and isinstance(doc.get("sample_rate"), (int, float)):
        return float(doc["sample_rate"])
    return DEFAULT_SAMPLE_RATE


def _build_source(config: ExperimentConfig, catalog: Catalog,
                  plans: Sequence[FoldPlan]) -> TrialDataSource:
    keys: list[TrialKey] = []
    seen = set()
    for plan in plans:
        for key in plan.train_trials + plan.test_trials:
            if key not in seen:
                seen.add(key)
                keys.append(key)
    vocabulary = experiment_vocabulary(catalog, keys, config.granularity)
    return TrialDataSource(
        catalog, config.granularity, config.feature_spec(), vocabulary,
        expected_channels=config.expected_channels,
        sample_rate=_read_sample_rate(config.catalog))


def _experiment_payload(config: ExperimentConfig, plans: Sequence[FoldPlan],
                        source: TrialDataSource) -> dict:
    return {
        "catalog": str(config.catalog),
        "granularity": config.granularity,
        "cv": config.cv,
        "task_combo": config.task_combo,
        "tasks": list(config.tasks) if config.tasks else None,
        "test_task": config.test_task,
        "train_tasks": list(config.train_tasks) if config.train_tasks else None,
        "learning_rate": config.resolved_learning_rate,
        "weight_decay": config.resolved_weight_decay,
        "epochs": config.epochs,
        "filters": list(config.filters),
        "kernel_size_override": config.kernel_size,
        "seed": config.seed,
        "workers": config.workers,
        "expected_channels": config.expected_channels,
        "left_offset": config.left_offset,
        "right_offset": config.right_offset,
        "num_features": source.feature_spec.num_features,
        "sample_rate": source.sample_rate,
        "vocabulary": list(source.vocabulary),
        "fold_names": [p.name for p in plans],
    }


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Execute every fold of the configured experiment.

    Diverged folds (non-finite loss) are recorded and skipped by the
    aggregates. Any other fold failure persists the partial report first
    (when output_dir is set) and then re-raises with fold context.
    """
    started = time.perf_counter()
    catalog = build_catalog(config.catalog)
    plans = plan_folds(config, catalog)
    source = _build_source(config, catalog, plans)
    experiment = _experiment_payload(config, plans, source)

    fold_payloads: dict[str, dict] = {}
    fold_seconds: dict[str, float] = {}
    failure: Optional[tuple[FoldPlan, BaseException]] = None

    def _execute(plan: FoldPlan) -> None:
        nonlocal failure
        t0 = time.perf_counter()
        try:
            payload, _ = run_fold(plan, source, config)
            fold_payloads[plan.name] = payload
        except Exception as exc:  # noqa: BLE001 - recorded, then re-raised
            fold_payloads[plan.name] = {
                "name": plan.name,
                "held_out": plan.held_out,
                "status": "failed",
                "error": str(exc),
            }
            if failure is None:
                failure = (plan, exc)
        finally:
            fold_seconds[plan.name] = time.perf_counter() - t0

    if config.workers == 1 or len(plans) <= 1:
        for plan in plans:
            _execute(plan)
            if failure is not None:
                break
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(_execute, plans))

    ordered = tuple(fold_payloads[p.name] for p in plans if p.name in fold_payloads)
    report = ExperimentReport(
        version=__version__,
        experiment=experiment,
        folds=ordered,
        aggregate=_aggregate(ordered),
        timing={
            "total_seconds": time.perf_counter() - started,
            "folds": dict(sorted(fold_seconds.items())),
        },
    )
    if failure is not None:
        plan, exc = failure
        if config.output_dir:
            emit_report(report, config.output_dir)
        raise FoldFailure(f"fold {plan.name} failed: {exc}") from exc
    if config.output_dir:
        emit_report(report, config.output_dir)
    return report


def run_single_fold(config: ExperimentConfig, fold_name: str,
                    checkpoint: Optional[str] = None) -> tuple[dict, TcnModel]:
    """Train exactly one fold of the configured experiment (CLI `train`)."""
    catalog = build_catalog(config.catalog)
    plans = plan_folds(config, catalog)
    matches = [p for p in plans if p.name == fold_name]
    if not matches:
        names = ", ".join(p.name for p in plans)
        raise InvalidConfig(f"no fold named {fold_name!r}; available: {names}")
    source = _build_source(config, catalog, plans)
    payload, model = run_fold(matches[0], source, config)
    if checkpoint and model is not None:
        save_model(model, checkpoint)
    return payload, model


# ---------------------------------------------------------------------------
# report emission and loading

def _fmt(value, width: int = 7) -> str:
    if value is None:
        return "N/A".rjust(width)
    return f"{value:{width}.2f}"


def render_tables(payload: dict) -> str:
    """Human-readable tables for one report payload."""
    exp = payload["experiment"]
    lines = [
        f"granularity: {exp['granularity']}   cv: {exp['cv']}   "
        f"seed: {exp['seed']}   epochs: {exp['epochs']}",
        f"catalog: {exp['catalog']}",
        f"classes ({len(exp['vocabulary'])}): {', '.join(exp['vocabulary'])}",
        "",
        f"{'fold':<34} {'held out':<18} {'k':>3} {'acc':>7} {'edit':>7}",
    ]
    for fold in payload["folds"]:
        if fold["status"] != "ok":
            lines.append(
                f"{fold['name']:<34} {fold.get('held_out', ''):<18} "
                f"{'-':>3} [{fold['status']}] {fold.get('error', '')}")
            continue
        metrics = fold["metrics"]
        lines.append(
            f"{fold['name']:<34} {fold['held_out']:<18} {fold['kernel_size']:>3} "
            f"{_fmt(metrics['accuracy_mean'])} {_fmt(metrics['edit_score_mean'])}")
    agg = payload["aggregate"]
    lines.append("-" * 72)
    lines.append(
        f"{'mean over ' + str(agg['num_ok_folds']) + ' folds':<57} "
        f"{_fmt(agg['accuracy_mean'])} {_fmt(agg['edit_score_mean'])}")
    if agg["per_class_ap_mean"]:
        lines.append("")
        lines.append(f"{'class':<24} {'#':>6} {'AP':>8}")
        for cls in sorted(agg["per_class_ap_mean"]):
            ap = agg["per_class_ap_mean"][cls]
            sup = agg["per_class_support_total"].get(cls, 0)
            lines.append(f"{cls:<24} {sup:>6} {_fmt(ap, 8)}")
        lines.append(
            f"{'mAP (macro / micro)':<24} {'':>6} "
            f"{_fmt(agg['map_macro_mean'], 8)} / {_fmt(agg['map_micro_mean'], 8)}")
    lines.append("")
    return "\n".join(lines)


def emit_report(report: ExperimentReport, out_dir,
                formats: Sequence[str] = ("json", "text")) -> dict[str, Path]:
    """Write report artifacts; returns {"json": path, "text": path}."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}")
    written: dict[str, Path] = {}
    try:
        if "json" in formats:
            path = out / "report.json"
            path.write_bytes(report.json_bytes(include_timing=True))
            written["json"] = path
        if "text" in formats:
            path = out / "tables.txt"
            path.write_text(render_tables(report.payload()))
            written["text"] = path
    except OSError as exc:
        raise IoFailure(f"cannot write report under {out}: {exc}")
    return written


def load_report(path) -> dict:
    """Read a report.json back and re-verify its aggregate block."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"report not found: {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"report is not valid JSON: {p}: {exc}")
    recomputed = _aggregate(payload.get("folds", ()))
    stored = payload.get("aggregate", {})
    for key in ("accuracy_mean", "edit_score_mean", "map_macro_mean", "map_micro_mean"):
        a, b = stored.get(key), recomputed.get(key)
        if (a is None) != (b is None):
            raise DataError(f"report aggregate {key!r} inconsistent with folds")
        if a is not None and abs(a - b) > 1e-9:
            raise DataError(
                f"report aggregate {key!r} = {a} but folds imply {b}")
    return payload


def combine_reports(paths: Sequence) -> str:
    """One summary row per report (CLI `report` re-aggregation)."""
    lines = [f"{'tasks':<28} {'granularity':<10} {'cv':<10} "
             f"{'acc':>7} {'edit':>7} {'macro':>7} {'micro':>7}"]
    for path in paths:
        payload = load_report(path)
        exp = payload["experiment"]
        agg = payload["aggregate"]
        if exp["cv"] == "loto":
            label = f"{exp['test_task']}<-{'+'.join(exp['train_tasks'])}"
        elif exp["task_combo"]:
            label = exp["task_combo"]
        elif exp["tasks"]:
            label = "+".join(exp["tasks"])
        else:
            label = exp["cv"]
        lines.append(
            f"{label:<28} {exp['granularity']:<10} {exp['cv']:<10} "
            f"{_fmt(agg['accuracy_mean'])} {_fmt(agg['edit_score_mean'])} "
            f"{_fmt(agg['map_macro_mean'])} {_fmt(agg['map_micro_mean'])}")
    lines.append("")
    return "\n".join(lines)
