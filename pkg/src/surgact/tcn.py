"""Encoder-decoder temporal convolutional model and its training loop.

Architecture, channels-first on (F, T) float64 signals:

    encoder:  3 x [conv(k) -> relu -> maxpool(2) -> channel-norm]
              with channel progression F -> f1 -> f2 -> f3
    decoder:  3 x [upsample(2) -> conv(k) -> relu -> channel-norm]
              with channel progression f3 -> f2 -> f1 -> f1
    head:     1x1 conv f1 -> num_classes, then restore to the input length

Defaults f = (32, 64, 96). Three pooling stages mean the input must be at
least 8 frames. The kernel width is not fixed by hand: it is derived from
the training transcripts as the mean duration (in frames) of the activity
class whose mean duration is shortest, rounded to the nearest odd integer,
never below 3.

Training is full-sequence: one trial is one batch. Optimization is Adam
with decoupled weight decay on a mean per-frame cross entropy.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .dataset import LabelTranscript, TrialKey
from .errors import (
    ChannelMismatch,
    DataError,
    EmptyTranscripts,
    InvalidConfig,
    NonFiniteLoss,
    NonNumericCell,
    ShapeMismatch,
    TooShort,
    VocabularyMismatch,
)
from .nn import (
    Adam,
    ChannelNorm,
    Conv1d,
    MaxPool1d,
    Relu,
    RestoreLength,
    UpsampleRepeat,
    softmax_cross_entropy,
)

__all__ = [
    "ModelConfig",
    "TcnModel",
    "TrialTensors",
    "TrainRecord",
    "HYPERPARAM_DEFAULTS",
    "MIN_FRAMES",
    "compute_kernel_size",
    "build_model",
    "train_fold",
    "predict_labels",
    "save_model",
    "load_model",
]

# Optimizer settings that go with each cross-validation setup.
HYPERPARAM_DEFAULTS: dict[str, dict[str, float]] = {
    "louo": {"learning_rate": 5e-5, "weight_decay": 5e-4},
    "loto": {"learning_rate": 1e-4, "weight_decay": 1e-3},
}

DEFAULT_EPOCHS = 60

# three pooling stages of width 2
MIN_FRAMES = 8

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    kernel_size: int
    filters: tuple[int, int, int] = (32, 64, 96)
    learning_rate: float = HYPERPARAM_DEFAULTS["louo"]["learning_rate"]
    weight_decay: float = HYPERPARAM_DEFAULTS["louo"]["weight_decay"]
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidConfig(f"need at least 2 classes, got {self.num_classes}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidConfig(f"kernel_size must be odd, got {self.kernel_size}")
        if len(self.filters) != 3 or any(f < 1 for f in self.filters):
            raise InvalidConfig(f"filters must be 3 positive counts, got {self.filters}")
        if self.learning_rate <= 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise InvalidConfig(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0:
            raise InvalidConfig(f"epochs must be >= 0, got {self.epochs}")


def compute_kernel_size(transcripts: Iterable[LabelTranscript]) -> int:
    """Mean duration (frames) of the class with the shortest mean, as the
    nearest odd integer >= 3. Uses training transcripts only."""
    durations: dict[str, list[int]] = {}
    for tr in transcripts:
        for seg in tr.segments:
            durations.setdefault(seg.label, []).append(seg.num_frames)
    if not durations:
        raise EmptyTranscripts("no labeled segments in any training transcript")
    shortest = min(sum(v) / len(v) for v in durations.values())
    k = int(np.floor(shortest + 0.5))
    if k % 2 == 0:
        k -= 1
    return max(k, 3)


class TcnModel:
    """The encoder-decoder network with hand-written backward passes."""

    def __init__(self, config: ModelConfig, input_channels: int,
                 rng: Optional[np.random.Generator] = None):
        if input_channels < 1:
            raise InvalidConfig(f"input_channels must be >= 1, got {input_channels}")
        self.config = config
        self.input_channels = input_channels
        f1, f2, f3 = config.filters
        k = config.kernel_size
        self.encoder = []
        for c_in, c_out in ((input_channels, f1), (f1, f2), (f2, f3)):
            self.encoder.append(
                (Conv1d(c_in, c_out, k, rng), Relu(), MaxPool1d(), ChannelNorm()))
        self.decoder = []
        for c_in, c_out in ((f3, f2), (f2, f1), (f1, f1)):
            self.decoder.append(
                (UpsampleRepeat(), Conv1d(c_in, c_out, k, rng), Relu(), ChannelNorm()))
        self.classifier = Conv1d(f1, config.num_classes, 1, rng)
        self.restore = RestoreLength()

    @property
    def convs(self) -> list[Conv1d]:
        out = [stage[0] for stage in self.encoder]
        out += [stage[1] for stage in self.decoder]
        out.append(self.classifier)
        return out

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for conv in self.convs:
            out.extend(conv.params())
        return out

    def grads(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for conv in self.convs:
            out.extend(conv.grads())
        return out

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(F, T) signal to (num_classes, T) logits; T must be >= 8."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeMismatch(f"expected (channels, frames), got shape {x.shape}")
        if x.shape[0] != self.input_channels:
            raise ChannelMismatch(
                f"expected {self.input_channels} channels, got {x.shape[0]}")
        t = x.shape[1]
        if t < MIN_FRAMES:
            raise TooShort(f"need at least {MIN_FRAMES} frames, got {t}")
        h = x
        for conv, relu, pool, norm in self.encoder:
            h = norm.forward(pool.forward(relu.forward(conv.forward(h))))
        for up, conv, relu, norm in self.decoder:
            h = norm.forward(relu.forward(conv.forward(up.forward(h))))
        h = self.classifier.forward(h)
        return self.restore.forward(h, t)

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        """Gradient of the last forward pass; fills every conv's grad_w/grad_b
        and returns the gradient with respect to the input signal."""
        g = self.restore.backward(grad_logits)
        g = self.classifier.backward(g)
        for up, conv, relu, norm in reversed(self.decoder):
            g = up.backward(conv.backward(relu.backward(norm.backward(g))))
        for conv, relu, pool, norm in reversed(self.encoder):
            g = conv.backward(relu.backward(pool.backward(norm.backward(g))))
        return g

    def loss_and_grads(
        self,
        x: np.ndarray,
        targets: np.ndarray,
        mask: Optional[np.ndarray] = None,
    ) -> tuple[float, list[np.ndarray], np.ndarray]:
        """One forward/backward pass. Returns (loss, parameter gradients,
        logits); the gradient arrays are the model's own buffers."""
        logits = self.forward(x)
        loss, grad_logits = softmax_cross_entropy(logits, targets, mask)
        self.backward(grad_logits)
        return loss, self.grads(), logits


def build_model(config: ModelConfig, input_channels: int) -> TcnModel:
    """Fresh model with parameters drawn deterministically from config.seed."""
    rng = np.random.default_rng(config.seed)
    return TcnModel(config, input_channels, rng)


@dataclass(frozen=True)
class TrialTensors:
    """Model-ready arrays for one trial."""

    features: np.ndarray  # (T, F)
    targets: np.ndarray  # (T,) int
    mask: Optional[np.ndarray] = None  # (T,) bool; None means all frames count


@dataclass(frozen=True)
class TrainRecord:
    """What happened during one fold's training run.

    epoch_frame_accuracies are measured on each step's pre-update logits,
    so they trail a fresh post-training evaluation slightly.
    """

    fold_name: str
    seed: int
    epoch_mean_losses: tuple[float, ...]
    epoch_frame_accuracies: tuple[float, ...]
    num_steps: int
    wall_clock_seconds: float


def _check_targets(key: TrialKey, tensors: TrialTensors, num_classes: int) -> None:
    t = tensors.targets
    if t.ndim != 1 or t.shape[0] != tensors.features.shape[0]:
        raise ShapeMismatch(
            f"trial {key}: targets shape {t.shape} vs {tensors.features.shape[0]} frames")
    if t.size and (t.min() < 0 or t.max() >= num_classes):
        raise VocabularyMismatch(
            f"trial {key}: targets outside [0, {num_classes})")


def train_fold(
    model: TcnModel,
    fold,
    data: Mapping[TrialKey, TrialTensors],
    config: ModelConfig,
) -> TrainRecord:
    """Train `model` in place on the fold's training trials.

    One trial is one optimization step (full-sequence batch). Trial order is
    reshuffled each epoch from a generator seeded by config.seed, so a fold
    replays exactly given the same seed. Only training trials are touched;
    the mapping may contain them exclusively.
    """
    start = time.perf_counter()
    keys = sorted(fold.train_trials)
    if not keys:
        raise DataError(f"fold {fold.name}: no training trials")
    for key in keys:
        if key not in data:
            raise DataError(f"fold {fold.name}: no tensors for training trial {key}")
        _check_targets(key, data[key], config.num_classes)
    optimizer = Adam(model.params(), config.learning_rate, config.weight_decay)
    # separate stream from the parameter-init draw on the same seed
    shuffle_rng = np.random.default_rng((config.seed, 1))
    losses: list[float] = []
    accs: list[float] = []
    steps = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(keys))
        epoch_loss = 0.0
        correct = 0
        counted = 0
        for idx in order:
            key = keys[idx]
            tensors = data[key]
            loss, grads, logits = model.loss_and_grads(
                tensors.features.T, tensors.targets, tensors.mask)
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"fold {fold.name}: epoch {epoch}, trial {key}: loss={loss}")
            pred = np.argmax(logits, axis=0)
            keep = tensors.mask if tensors.mask is not None else np.ones(
                pred.shape[0], dtype=bool)
            correct += int((pred[keep] == tensors.targets[keep]).sum())
            counted += int(keep.sum())
            optimizer.step(model.params(), grads)
            epoch_loss += loss
            steps += 1
        losses.append(epoch_loss / len(keys))
        accs.append(100.0 * correct / counted if counted else 0.0)
    return TrainRecord(
        fold_name=fold.name,
        seed=config.seed,
        epoch_mean_losses=tuple(losses),
        epoch_frame_accuracies=tuple(accs),
        num_steps=steps,
        wall_clock_seconds=time.perf_counter() - start,
    )


def predict_labels(model: TcnModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Frame-wise prediction for one trial.

    features: (T, F). Returns (labels, scores): labels (T,) int ids via
    argmax (ties to the lowest id), scores (T, C) softmax probabilities,
    each row summing to 1.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeMismatch(f"features must be (T, F), got shape {feats.shape}")
    if feats.shape[1] != model.input_channels:
        raise ChannelMismatch(
            f"expected {model.input_channels} features, got {feats.shape[1]}")
    if not np.isfinite(feats).all():
        raise NonNumericCell("features contain non-finite values")
    logits = model.forward(feats.T)
    z = logits - logits.max(axis=0, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=0, keepdims=True)
    labels = np.argmax(logits, axis=0)
    return labels, probs.T


def save_model(model: TcnModel, path) -> Path:
    """Checkpoint: config plus every parameter array, bit-exact."""
    p = Path(path)
    cfg = model.config
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "input_channels": model.input_channels,
        "config": {
            "num_classes": cfg.num_classes,
            "kernel_size": cfg.kernel_size,
            "filters": list(cfg.filters),
            "learning_rate": cfg.learning_rate,
            "weight_decay": cfg.weight_decay,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
        },
    }
    arrays = {f"param_{i}": arr for i, arr in enumerate(model.params())}
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return p


def load_model(path) -> TcnModel:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"checkpoint not found: {p}")
    with np.load(p, allow_pickle=False) as bundle:
        try:
            meta = json.loads(str(bundle["meta"]))
        except KeyError:
            raise DataError(f"checkpoint lacks metadata: {p}")
        version = meta.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise DataError(
                f"checkpoint format {version!r} unsupported (expected {CHECKPOINT_VERSION})")
        raw = meta["config"]
        config = ModelConfig(
            num_classes=raw["num_classes"],
            kernel_size=raw["kernel_size"],
            filters=tuple(raw["filters"]),
            learning_rate=raw["learning_rate"],
            weight_decay=raw["weight_decay"],
            epochs=raw["epochs"],
            seed=raw["seed"],
        )
        model = TcnModel(config, meta["input_channels"], rng=None)
        params = model.params()
        for i, target in enumerate(params):
            name = f"param_{i}"
            if name not in bundle:
                raise DataError(f"checkpoint missing array {name}: {p}")
            stored = bundle[name]
            if stored.shape != target.shape:
                raise ShapeMismatch(
                    f"checkpoint array {name} has shape {stored.shape}, "
                    f"expected {target.shape}")
            target[:] = stored
        extras = [k for k in bundle.files if k.startswith("param_")
                  and int(k.split("_")[1]) >= len(params)]
        if extras:
            raise ShapeMismatch(f"checkpoint has unexpected arrays: {extras}")
    return model
