"""
Layer primitives of the DenseNet-BC composite function.

All kernels work on NCHW activations, are differentiable through the active tape and use
cross-correlation (no kernel flip) semantics.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import InvalidArgumentException, ShapeMismatchException, shape_mismatch_exception
from ..tensor import Tensor, apply_op
from .module import Mode, check_mode

ALLOWED_KERNELS = (1, 3, 7)

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5


def _pair(value) -> Tuple[int, int]:
    if isinstance(value, int):
        return value, value
    a, b = value
    return int(a), int(b)


@dataclass
class ConvParams:
    """Convolution without bias (BatchNorm always follows)."""

    weight: Tensor
    """Kernel, ``out_ch × in_ch × kh × kw``."""
    stride: Tuple[int, int] = (1, 1)
    """Vertical and horizontal stride."""
    padding: Tuple[int, int] = (0, 0)
    """Zero padding added on each side, vertically and horizontally."""

    def __post_init__(self):
        self.stride = _pair(self.stride)
        self.padding = _pair(self.padding)
        if self.weight.ndim != 4:
            raise InvalidArgumentException(f"conv weight must be 4-D, got shape {self.weight.shape}")
        out_ch, _, kh, kw = self.weight.shape
        if kh not in ALLOWED_KERNELS or kw not in ALLOWED_KERNELS:
            raise InvalidArgumentException(f"kernel {kh}x{kw} not in {ALLOWED_KERNELS}")
        if out_ch < 1:
            raise InvalidArgumentException("conv needs at least one output channel")
        if min(self.stride) < 1 or min(self.padding) < 0:
            raise InvalidArgumentException(
                f"invalid stride {self.stride} or padding {self.padding}"
            )

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]


@dataclass
class BatchNormParams:
    """Per-channel BatchNorm parameters and running statistics."""

    gamma: Tensor
    """Scale, length ``ch``."""
    beta: Tensor
    """Shift, length ``ch``."""
    running_mean: np.ndarray
    """Running mean, length ``ch``; updated in place in training mode."""
    running_var: np.ndarray
    """Running (biased) variance, length ``ch``; updated in place in training mode."""
    epsilon: float = BN_EPSILON
    momentum: float = BN_MOMENTUM
    mode: Mode = "train"

    def __post_init__(self):
        ch = self.gamma.size
        if not (self.beta.size == self.running_mean.size == self.running_var.size == ch):
            raise InvalidArgumentException("BatchNorm parameters and statistics must all have length ch")
        if not 0.0 < self.momentum < 1.0:
            raise InvalidArgumentException(f"BatchNorm momentum must be in (0, 1), got {self.momentum}")
        if self.epsilon <= 0:
            raise InvalidArgumentException("BatchNorm epsilon must be positive")
        check_mode(self.mode)

    @property
    def channels(self) -> int:
        return self.gamma.size


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Output extent ``floor((size + 2·padding − kernel) / stride) + 1``."""
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """2-D cross-correlation of ``N×C×H×W`` input with ``p.weight``."""
    if x.ndim != 4:
        raise ShapeMismatchException(f"conv2d expects N×C×H×W input, got shape {x.shape}")
    n, c, h, w = x.shape
    out_ch, in_ch, kh, kw = p.weight.shape
    if c != in_ch:
        raise shape_mismatch_exception("conv2d channels", x.shape, p.weight.shape)
    sh, sw = p.stride
    ph, pw = p.padding
    ho = conv_output_size(h, kh, sh, ph)
    wo = conv_output_size(w, kw, sw, pw)
    if ho < 1 or wo < 1:
        raise ShapeMismatchException(
            f"conv2d: input {h}x{w} smaller than kernel {kh}x{kw} after padding {p.padding}"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    weight = p.weight.data
    out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def _backward(g: np.ndarray):
        dx = dw = None
        if p.weight.requires_grad:
            dw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        if x.requires_grad:
            dxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, weight[:, :, i, j], axes=([1], [0]))
                    dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += contrib.transpose(0, 3, 1, 2)
            dx = dxp[:, :, ph : ph + h, pw : pw + w]
        return dx, dw

    return apply_op("conv2d", (x, p.weight), np.ascontiguousarray(out), _backward)


def batch_norm(x: Tensor, p: BatchNormParams) -> Tensor:
    """
    Per-channel batch normalization followed by ``gamma·x̂ + beta``.

    Training mode normalizes with batch statistics and moves the running statistics
    towards them; inference mode uses the running statistics.
    """
    if x.ndim != 4 or x.shape[1] != p.channels:
        raise shape_mismatch_exception("batch_norm", x.shape, (p.channels,))
    n, c, h, w = x.shape
    m = n * h * w
    data = x.data
    gamma = p.gamma.data.reshape(1, c, 1, 1)
    beta = p.beta.data.reshape(1, c, 1, 1)
    eps = data.dtype.type(p.epsilon)

    if p.mode == "train":
        if m < 2:
            raise InvalidArgumentException(
                f"batch_norm in training mode needs N·H·W >= 2, got {m}"
            )
        mean = data.mean(axis=(0, 2, 3))
        var = data.var(axis=(0, 2, 3))
        mom = data.dtype.type(p.momentum)
        p.running_mean[...] = mom * p.running_mean + (1 - mom) * mean
        p.running_var[...] = mom * p.running_var + (1 - mom) * var
    else:
        mean = p.running_mean.astype(data.dtype)
        var = p.running_var.astype(data.dtype)

    inv_std = (1.0 / np.sqrt(var + eps)).astype(data.dtype).reshape(1, c, 1, 1)
    x_hat = (data - mean.reshape(1, c, 1, 1)) * inv_std
    out = gamma * x_hat + beta
    training = p.mode == "train"

    def _backward(g: np.ndarray):
        dgamma = (g * x_hat).sum(axis=(0, 2, 3)) if p.gamma.requires_grad else None
        dbeta = g.sum(axis=(0, 2, 3)) if p.beta.requires_grad else None
        dx = None
        if x.requires_grad:
            dx_hat = g * gamma
            if training:
                sum_dx_hat = dx_hat.sum(axis=(0, 2, 3), keepdims=True)
                sum_dx_hat_xhat = (dx_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
                dx = inv_std / m * (m * dx_hat - sum_dx_hat - x_hat * sum_dx_hat_xhat)
            else:
                dx = dx_hat * inv_std
        return dx, dgamma, dbeta

    return apply_op("batch_norm", (x, p.gamma, p.beta), out, _backward)


def relu(x: Tensor) -> Tensor:
    data = x.data
    mask = data > 0

    def _backward(g: np.ndarray):
        return (g * mask,)

    return apply_op("relu", (x,), np.where(mask, data, data.dtype.type(0)), _backward)


def avg_pool(x: Tensor) -> Tensor:
    """2×2 average pooling with stride 2."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise InvalidArgumentException(f"avg_pool needs even spatial dims, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def _backward(g: np.ndarray):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * g.dtype.type(0.25),)

    return apply_op("avg_pool", (x,), out, _backward)


def max_pool(x: Tensor, kernel: int = 3, stride: int = 2, padding: int = 1) -> Tensor:
    """Max pooling; among equal maxima the first window position wins."""
    n, c, h, w = x.shape
    ho = conv_output_size(h, kernel, stride, padding)
    wo = conv_output_size(w, kernel, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeMismatchException(f"max_pool: input {h}x{w} too small for kernel {kernel}")
    xp = np.pad(
        x.data,
        ((0, 0), (0, 0), (padding, padding), (padding, padding)),
        constant_values=-np.inf,
    )
    windows = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    flat = windows.reshape(n, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def _backward(g: np.ndarray):
        dxp = np.zeros(xp.shape, dtype=g.dtype)
        for t in range(kernel * kernel):
            i, j = divmod(t, kernel)
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += g * (arg == t)
        return (dxp[:, :, padding : padding + h, padding : padding + w],)

    return apply_op("max_pool", (x,), out, _backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over all spatial positions: ``N×C×H×W`` → ``N×C``."""
    n, c, h, w = x.shape
    area = h * w

    def _backward(g: np.ndarray):
        return (np.broadcast_to(g[:, :, None, None] / g.dtype.type(area), (n, c, h, w)).copy(),)

    return apply_op("global_avg_pool", (x,), x.data.mean(axis=(2, 3)), _backward)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate ``N×Cᵢ×H×W`` tensors along the channel axis, in argument order."""
    if not xs:
        raise InvalidArgumentException("concat_channels needs at least one tensor")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != 4 or ref[0] != t.shape[0] or ref[2:] != t.shape[2:]:
            raise shape_mismatch_exception("concat_channels", ref, t.shape)
    bounds: List[int] = list(np.cumsum([t.shape[1] for t in xs]))
    starts = [0] + bounds[:-1]

    def _backward(g: np.ndarray):
        return tuple(g[:, s:e] for s, e in zip(starts, bounds))

    out = np.concatenate([t.data for t in xs], axis=1)
    return apply_op("concat_channels", tuple(xs), out, _backward)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Channels ``start:stop`` of an ``N×C×H×W`` tensor."""
    if not 0 <= start < stop <= x.shape[1]:
        raise InvalidArgumentException(f"bad channel slice {start}:{stop} of {x.shape[1]}")
    shape = x.shape

    def _backward(g: np.ndarray):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return apply_op("slice_channels", (x,), x.data[:, start:stop], _backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x · weightᵀ + bias`` for ``N×d`` input and ``C×d`` weight."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise shape_mismatch_exception("linear", x.shape, weight.shape)
    if bias.shape != (weight.shape[0],):
        raise shape_mismatch_exception("linear bias", bias.shape, (weight.shape[0],))
    xd, wd = x.data, weight.data

    def _backward(g: np.ndarray):
        dx = g @ wd if x.requires_grad else None
        dw = g.T @ xd if weight.requires_grad else None
        db = g.sum(axis=0) if bias.requires_grad else None
        return dx, dw, db

    return apply_op("linear", (x, weight, bias), xd @ wd.T + bias.data, _backward)
