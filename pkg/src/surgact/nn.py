"""From-scratch building blocks for 1-D temporal conv networks.

Everything operates on float64 arrays in channels-first layout: a signal is
an array of shape (C, T), C channels by T frames. Each layer is a small class
with `forward(x)` and `backward(grad_y)`; `backward` returns the gradient
with respect to the layer input and, for parameterized layers, overwrites the
stored parameter gradients (`grad_w`, `grad_b`). One forward call caches what
the matching backward call needs, so a layer instance serves one signal at a
time; model instances are not shared across threads.

No autograd framework is used anywhere: every backward pass below is the
hand-derived exact gradient of the forward map, and `finite_diff_check`
is the harness used to verify them against central differences.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    AllFramesMasked,
    ChannelMismatch,
    InvalidConfig,
    ShapeMismatch,
    TargetOutOfRange,
    TooShort,
)

__all__ = [
    "Conv1d",
    "Relu",
    "MaxPool1d",
    "ChannelNorm",
    "UpsampleRepeat",
    "RestoreLength",
    "softmax_cross_entropy",
    "Adam",
    "finite_diff_check",
]


def _as_signal(x, *, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D (channels, frames), got shape {arr.shape}")
    return arr


class Conv1d:
    """1-D convolution with 'same' zero padding and stride 1.

    y[co, t] = b[co] + sum_{ci, j} w[co, ci, j] * x[ci, t + j - k//2]

    with x taken as zero outside [0, T). Odd kernel widths only, so the
    output length equals the input length. Implemented as an im2col matrix
    product; the backward pass folds the column gradient back into the
    padded signal and crops.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: Optional[np.random.Generator] = None):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise InvalidConfig(f"kernel_size must be odd and >= 1, got {kernel_size}")
        if in_channels < 1 or out_channels < 1:
            raise InvalidConfig("channel counts must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        # uniform +-sqrt(1/(C_in * k)), biases drawn from the same range
        bound = float(np.sqrt(1.0 / (in_channels * kernel_size)))
        if rng is None:
            self.w = np.zeros((out_channels, in_channels, kernel_size))
            self.b = np.zeros(out_channels)
        else:
            self.w = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel_size))
            self.b = rng.uniform(-bound, bound, size=out_channels)
        self.grad_w = np.zeros_like(self.w)
        self.grad_b = np.zeros_like(self.b)
        self._cols: Optional[np.ndarray] = None
        self._in_len = 0

    def params(self) -> list[np.ndarray]:
        return [self.w, self.b]

    def grads(self) -> list[np.ndarray]:
        return [self.grad_w, self.grad_b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_signal(x)
        c, t = x.shape
        if c != self.in_channels:
            raise ChannelMismatch(f"expected {self.in_channels} input channels, got {c}")
        k = self.kernel_size
        pad = k // 2
        xp = np.zeros((c, t + 2 * pad))
        xp[:, pad:pad + t] = x
        # cols[ci*k + j, t] = xp[ci, t + j]
        windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
        cols = windows.transpose(0, 2, 1).reshape(c * k, t)
        self._cols = cols
        self._in_len = t
        w2 = self.w.reshape(self.out_channels, c * k)
        return w2 @ cols + self.b[:, None]

    def backward(self, grad_y: np.ndarray) -> np.ndarray:
        if self._cols is None:
            raise ShapeMismatch("backward called before forward")
        grad_y = _as_signal(grad_y, name="grad_y")
        t = self._in_len
        if grad_y.shape != (self.out_channels, t):
            raise ShapeMismatch(
                f"grad_y shape {grad_y.shape} != output shape {(self.out_channels, t)}")
        k = self.kernel_size
        c = self.in_channels
        pad = k // 2
        self.grad_b[:] = grad_y.sum(axis=1)
        self.grad_w[:] = (grad_y @ self._cols.T).reshape(self.w.shape)
        w2 = self.w.reshape(self.out_channels, c * k)
        gcols = (w2.T @ grad_y).reshape(c, k, t)
        gxp = np.zeros((c, t + 2 * pad))
        for j in range(k):
            gxp[:, j:j + t] += gcols[:, j, :]
        return gxp[:, pad:pad + t]


class Relu:
    """Elementwise max(x, 0); subgradient 0 at the kink."""

    def __init__(self):
        self._mask: Optional[np.ndarray] = None

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_signal(x)
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_y: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise ShapeMismatch("backward called before forward")
        grad_y = _as_signal(grad_y, name="grad_y")
        if grad_y.shape != self._mask.shape:
            raise ShapeMismatch(f"grad_y shape {grad_y.shape} != {self._mask.shape}")
        return np.where(self._mask, grad_y, 0.0)


class MaxPool1d:
    """Non-overlapping max pooling of width 2.

    Output length is floor(T/2); a trailing odd frame is dropped. The
    backward pass routes each output gradient to the frame that won the max,
    and to the earlier frame on exact ties.
    """

    def __init__(self):
        self._take_right: Optional[np.ndarray] = None
        self._in_shape: tuple[int, int] = (0, 0)

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_signal(x)
        c, t = x.shape
        if t < 2:
            raise TooShort(f"max pooling needs at least 2 frames, got {t}")
        t_out = t // 2
        left = x[:, 0:2 * t_out:2]
        right = x[:, 1:2 * t_out:2]
        self._take_right = right > left  # tie -> left (lower index)
        self._in_shape = (c, t)
        return np.where(self._take_right, right, left)

    def backward(self, grad_y: np.ndarray) -> np.ndarray:
        if self._take_right is None:
            raise ShapeMismatch("backward called before forward")
        grad_y = _as_signal(grad_y, name="grad_y")
        if grad_y.shape != self._take_right.shape:
            raise ShapeMismatch(f"grad_y shape {grad_y.shape} != {self._take_right.shape}")
        c, t = self._in_shape
        t_out = t // 2
        gx = np.zeros((c, t))
        gx[:, 0:2 * t_out:2] = np.where(self._take_right, 0.0, grad_y)
        gx[:, 1:2 * t_out:2] = np.where(self._take_right, grad_y, 0.0)
        return gx


class ChannelNorm:
    """Per-frame normalization by the largest channel magnitude.

    y[c, t] = x[c, t] / (max_c' |x[c', t]| + eps)

    An all-zero frame maps to an all-zero frame. The max is piecewise smooth;
    the backward pass attributes the denominator's gradient to the first
    channel attaining the max (ties broken by lowest channel index).
    """

    def __init__(self, eps: float = 1e-5):
        if eps <= 0:
            raise InvalidConfig(f"eps must be positive, got {eps}")
        self.eps = eps
        self._x: Optional[np.ndarray] = None
        self._scale: Optional[np.ndarray] = None
        self._argmax: Optional[np.ndarray] = None

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_signal(x)
        mag = np.abs(x)
        self._argmax = np.argmax(mag, axis=0)
        self._scale = mag.max(axis=0) + self.eps
        self._x = x.copy()
        return x / self._scale

    def backward(self, grad_y: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise ShapeMismatch("backward called before forward")
        grad_y = _as_signal(grad_y, name="grad_y")
        if grad_y.shape != self._x.shape:
            raise ShapeMismatch(f"grad_y shape {grad_y.shape} != {self._x.shape}")
        x, s, idx = self._x, self._scale, self._argmax
        gx = grad_y / s
        # d(scale)/dx is sign(x[a, t]) on the argmax channel a only
        dot = np.einsum("ct,ct->t", grad_y, x)
        cols = np.arange(x.shape[1])
        gx[idx, cols] -= dot * np.sign(x[idx, cols]) / (s * s)
        return gx


class UpsampleRepeat:
    """Nearest-neighbor upsampling by 2: each frame is emitted twice.

    Backward sums the gradients of the two copies.
    """

    def __init__(self):
        self._in_len = 0
        self._channels = 0

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = _as_signal(x)
        self._channels, self._in_len = x.shape
        return np.repeat(x, 2, axis=1)

    def backward(self, grad_y: np.ndarray) -> np.ndarray:
        grad_y = _as_signal(grad_y, name="grad_y")
        if grad_y.shape != (self._channels, 2 * self._in_len):
            raise ShapeMismatch(
                f"grad_y shape {grad_y.shape} != {(self._channels, 2 * self._in_len)}")
        return grad_y.reshape(self._channels, self._in_len, 2).sum(axis=2)


class RestoreLength:
    """Crop or right-pad a signal to a target length.

    Needed because three pool/upsample stages reproduce the input length only
    when it is a multiple of 8. Padding repeats the final frame, so its
    backward pass sums all the pad-frame gradients into that frame; cropping
    discards trailing frames, whose gradient is zero.
    """

    def __init__(self):
        self._in_len = 0
        self._target = 0
        self._channels = 0

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def forward(self, x: np.ndarray, target: int) -> np.ndarray:
        x = _as_signal(x)
        if target < 1:
            raise ShapeMismatch(f"target length must be positive, got {target}")
        c, t = x.shape
        if t < 1:
            raise TooShort("cannot restore an empty signal")
        self._channels, self._in_len, self._target = c, t, target
        if t == target:
            return x.copy()
        if t > target:
            return x[:, :target].copy()
        return np.concatenate([x, np.repeat(x[:, -1:], target - t, axis=1)], axis=1)

    def backward(self, grad_y: np.ndarray) -> np.ndarray:
        grad_y = _as_signal(grad_y, name="grad_y")
        if grad_y.shape != (self._channels, self._target):
            raise ShapeMismatch(
                f"grad_y shape {grad_y.shape} != {(self._channels, self._target)}")
        t, target = self._in_len, self._target
        if t == target:
            return grad_y.copy()
        if t > target:
            gx = np.zeros((self._channels, t))
            gx[:, :target] = grad_y
            return gx
        gx = grad_y[:, :t].copy()
        gx[:, -1] += grad_y[:, t:].sum(axis=1)
        return gx


def softmax_cross_entropy(
    logits: np.ndarray,
    targets: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray]:
    """Mean per-frame cross entropy under a column-wise softmax.

    logits: (C, T). targets: (T,) integer class ids. mask: optional (T,)
    booleans; masked-out frames contribute neither loss nor gradient and the
    mean is over unmasked frames only.

    Returns (loss, grad) where grad has the shape of logits and equals
    (softmax(logits) - onehot(targets)) / n_unmasked on unmasked columns.
    Stabilized by subtracting each column's max before exponentiating.
    """
    logits = _as_signal(logits, name="logits")
    c, t = logits.shape
    targets = np.asarray(targets)
    if targets.shape != (t,):
        raise ShapeMismatch(f"targets shape {targets.shape} != ({t},)")
    if not np.issubdtype(targets.dtype, np.integer):
        raise ShapeMismatch("targets must be integers")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise TargetOutOfRange(
            f"targets must lie in [0, {c}), got range "
            f"[{targets.min()}, {targets.max()}]")
    if mask is None:
        keep = np.ones(t, dtype=bool)
    else:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != (t,):
            raise ShapeMismatch(f"mask shape {keep.shape} != ({t},)")
    n = int(keep.sum())
    if n == 0:
        raise AllFramesMasked("every frame is masked out")

    z = logits - logits.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0, keepdims=True))
    logp = z - lse
    cols = np.arange(t)
    loss = float(-logp[targets, cols][keep].sum() / n)

    grad = np.exp(logp)
    grad[targets, cols] -= 1.0
    grad /= n
    grad[:, ~keep] = 0.0
    return loss, grad


class Adam:
    """Adam with decoupled weight decay over a list of parameter arrays.

    Each step first shrinks the parameters (p <- p - lr * wd * p), then
    applies the bias-corrected Adam delta computed from the raw gradients:

        m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
        p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    The moment buffers and step counter live on this object and are only
    ever mutated by `step`, which updates the parameter arrays in place.
    """

    def __init__(self, params: Sequence[np.ndarray], learning_rate: float,
                 weight_decay: float = 0.0, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if learning_rate < 0:
            raise InvalidConfig(f"learning_rate must be >= 0, got {learning_rate}")
        if weight_decay < 0:
            raise InvalidConfig(f"weight_decay must be >= 0, got {weight_decay}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise InvalidConfig("betas must lie in [0, 1)")
        if eps <= 0:
            raise InvalidConfig("eps must be positive")
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeMismatch(
                f"expected {len(self.m)} parameter/gradient arrays, "
                f"got {len(params)}/{len(grads)}")
        for p, g, m in zip(params, grads, self.m):
            if p.shape != m.shape or g.shape != m.shape:
                raise ShapeMismatch(
                    f"parameter/gradient shape {p.shape}/{g.shape} != state shape {m.shape}")
        self.step_count += 1
        t = self.step_count
        lr, wd = self.learning_rate, self.weight_decay
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if wd != 0.0:
                p -= lr * wd * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def finite_diff_check(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    point: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Compare an analytic gradient against central differences.

    `f(x)` must return `(value, grad)` with `grad` shaped like `x`, and must
    not hold on to `x` (it is perturbed in place between calls). Returns

        max_i |g_analytic[i] - g_fd[i]| / max(1, |g_fd[i]|)

    where g_fd[i] = (f(x + h e_i) - f(x - h e_i)) / (2h). The max(1, .)
    denominator makes the comparison absolute for small gradients and
    relative for large ones.
    """
    if h <= 0:
        raise InvalidConfig(f"h must be positive, got {h}")
    x = np.array(point, dtype=np.float64)
    _, g = f(x)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != x.shape:
        raise ShapeMismatch(f"analytic gradient shape {g.shape} != point shape {x.shape}")
    if x.size == 0:
        return 0.0
    g_fd = np.zeros_like(x)
    flat_x = x.ravel()
    flat_fd = g_fd.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        up, _ = f(x)
        flat_x[i] = orig - h
        down, _ = f(x)
        flat_x[i] = orig
        flat_fd[i] = (up - down) / (2.0 * h)
    rel = np.abs(g - g_fd) / np.maximum(1.0, np.abs(g_fd))
    return float(rel.max())
