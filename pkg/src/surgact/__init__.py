"""Surgical activity recognition from robot kinematics.

Frame-level gesture and motion-primitive recognition with an encoder-decoder
temporal convolutional network implemented from scratch (numpy only, exact
hand-written gradients), leave-one-user-out and leave-one-task-out
cross-validation, and segmentation-aware evaluation (frame accuracy, edit
score, mean average precision).
"""

from ._version import __version__
from . import crossval, dataset, errors, metrics, nn, runner, synth, tcn

__all__ = [
    "__version__",
    "crossval",
    "dataset",
    "errors",
    "metrics",
    "nn",
    "runner",
    "synth",
    "tcn",
]
