"""
Layer primitives for the embedding network.

Spatial ops accept either a single example ([C,H,W] / [C,T]) or a batch
([N,C,H,W] / [N,C,T]). Convolution is cross-correlation (no kernel flip).
Reductions accumulate in float64 and cast back to the input dtype.
"""

from __future__ import annotations

from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, log_softmax, softmax

from protosed.core.errors import DimensionError, UsageError
from protosed.tensor.tensor import Tensor

IntPair = Union[int, Tuple[int, int]]


class RunningStats:
    """Per-channel running mean/variance, updated in place"""

    def __init__(self, mean: np.ndarray, var: np.ndarray):
        self.mean = mean
        self.var = var

    def update(self, batch_mean: np.ndarray, batch_var: np.ndarray, momentum: float):
        self.mean[...] = (1 - momentum) * self.mean + momentum * batch_mean
        self.var[...] = (1 - momentum) * self.var + momentum * batch_var


def _pair(value: IntPair) -> Tuple[int, int]:
    return (value, value) if isinstance(value, int) else tuple(value)


def _conv2d_batched(x: Tensor, kernel: Tensor, bias: Optional[Tensor], stride: int, padding: Tuple[int, int]) -> Tensor:
    if stride < 1:
        raise UsageError(f"stride must be >= 1, got {stride}")
    if kernel.ndim != 4:
        raise DimensionError(f"conv2d kernel must be [C_out,C_in,kh,kw], got {kernel.shape}")
    n, c_in, h, w = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if c_in != k_in:
        raise DimensionError(f"conv2d input has {c_in} channels but kernel expects {k_in}")
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d bias must be [{c_out}], got {bias.shape}")
    ph, pw = padding
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = windows.shape[2], windows.shape[3]

    value = np.tensordot(windows, kernel.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        value = value + bias.data[None, :, None, None]
    value = np.ascontiguousarray(value, dtype=np.result_type(x.dtype, kernel.dtype))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = Tensor._result(value, parents, "conv2d")
    if out.requires_grad:
        def _backward(g):
            d_kernel = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])) if kernel.requires_grad else None
            d_x = None
            if x.requires_grad:
                d_xp = np.zeros(xp.shape, dtype=np.result_type(g.dtype, kernel.dtype))
                for i in range(kh):
                    for j in range(kw):
                        contrib = np.tensordot(g, kernel.data[:, :, i, j], axes=([1], [0]))
                        d_xp[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += contrib.transpose(0, 3, 1, 2)
                d_x = d_xp[:, :, ph:ph + h, pw:pw + w]
            grads = [d_x, d_kernel]
            if bias is not None:
                grads.append(g.sum(axis=(0, 2, 3)))
            return grads

        out._backward = _backward
    return out


def conv2d(
    input: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: IntPair = 0,
) -> Tensor:
    """
    2-D cross-correlation.

    Output spatial size is floor((H + 2*padding - kh) / stride) + 1 (same for W).
    """
    if input.ndim == 3:
        out = _conv2d_batched(input.reshape(1, *input.shape), kernel, bias, stride, _pair(padding))
        return out.reshape(out.shape[1:])
    if input.ndim != 4:
        raise DimensionError(f"conv2d expects [C,H,W] or [N,C,H,W], got {input.shape}")
    return _conv2d_batched(input, kernel, bias, stride, _pair(padding))


def conv1d(
    input: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """1-D cross-correlation over the last axis of [C,T] or [N,C,T]"""
    if kernel.ndim != 3:
        raise DimensionError(f"conv1d kernel must be [C_out,C_in,k], got {kernel.shape}")
    single = input.ndim == 2
    if single:
        input = input.reshape(1, *input.shape)
    if input.ndim != 3:
        raise DimensionError(f"conv1d expects [C,T] or [N,C,T], got {input.shape}")
    n, c, t = input.shape
    c_out, c_in, k = kernel.shape
    out = _conv2d_batched(
        input.reshape(n, c, 1, t),
        kernel.reshape(c_out, c_in, 1, k),
        bias,
        stride,
        (0, padding),
    )
    out = out.reshape(n, c_out, out.shape[3])
    return out.reshape(c_out, out.shape[2]) if single else out


def batchnorm(
    input: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: Optional[RunningStats] = None,
    training: bool = True,
    eps: float = 1e-5,
    momentum: float = 0.1,
    channel_axis: int = 1,
) -> Tensor:
    """
    Per-channel normalization over every axis except `channel_axis`.

    Training mode uses batch statistics and folds them into `running`
    (unbiased variance); eval mode uses `running` only.
    """
    if eps <= 0:
        raise UsageError(f"batchnorm eps must be > 0, got {eps}")
    channels = input.shape[channel_axis]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"batchnorm over {channels} channels got gamma {gamma.shape}, beta {beta.shape}"
        )
    axes = tuple(a for a in range(input.ndim) if a != channel_axis)
    shape = [1] * input.ndim
    shape[channel_axis] = channels
    count = input.size // channels

    x64 = input.data.astype(np.float64)
    if training:
        mean = x64.mean(axis=axes)
        var = x64.var(axis=axes)
        if running is not None:
            unbiased = var * count / (count - 1) if count > 1 else var
            running.update(mean, unbiased, momentum)
    else:
        if running is None:
            raise UsageError("batchnorm eval mode needs running statistics")
        mean = running.mean.astype(np.float64)
        var = running.var.astype(np.float64)

    inv_std = (1.0 / np.sqrt(var + eps)).reshape(shape)
    x_hat = (x64 - mean.reshape(shape)) * inv_std
    gamma64 = gamma.data.astype(np.float64).reshape(shape)
    value = (gamma64 * x_hat + beta.data.astype(np.float64).reshape(shape)).astype(input.dtype)

    out = Tensor._result(value, (input, gamma, beta), "batchnorm")
    if out.requires_grad:
        def _backward(g):
            g64 = g.astype(np.float64)
            d_gamma = (g64 * x_hat).sum(axis=axes)
            d_beta = g64.sum(axis=axes)
            d_xhat = g64 * gamma64
            if training:
                d_x = inv_std / count * (
                    count * d_xhat
                    - d_xhat.sum(axis=axes, keepdims=True)
                    - x_hat * (d_xhat * x_hat).sum(axis=axes, keepdims=True)
                )
            else:
                d_x = d_xhat * inv_std
            return d_x, d_gamma, d_beta

        out._backward = _backward
    return out


def leaky_relu(input: Tensor, slope: float = 0.01) -> Tensor:
    """x for x >= 0, slope*x otherwise; the derivative at 0 is 1"""
    positive = input.data >= 0
    value = np.where(positive, input.data, slope * input.data).astype(input.dtype)
    out = Tensor._result(value, (input,), "leaky_relu")
    if out.requires_grad:
        out._backward = lambda g: (np.where(positive, g, slope * g),)
    return out


def sigmoid(input: Tensor) -> Tensor:
    value = expit(input.data).astype(input.dtype)
    out = Tensor._result(value, (input,), "sigmoid")
    if out.requires_grad:
        out._backward = lambda g: (g * value * (1 - value),)
    return out


def global_avg_pool(input: Tensor) -> Tensor:
    """Mean over the last two (spatial) axes: [C,H,W] -> [C], [N,C,H,W] -> [N,C]"""
    if input.ndim not in (3, 4):
        raise DimensionError(f"global_avg_pool expects [C,H,W] or [N,C,H,W], got {input.shape}")
    h, w = input.shape[-2:]
    value = input.data.astype(np.float64).mean(axis=(-2, -1)).astype(input.dtype)
    out = Tensor._result(value, (input,), "global_avg_pool")
    if out.requires_grad:
        out._backward = lambda g: (np.broadcast_to(g[..., None, None] / (h * w), input.shape),)
    return out


def avg_pool2d(input: Tensor, k: int) -> Tensor:
    """Non-overlapping k x k means; trailing rows/cols that do not fill a window are dropped"""
    if k < 1:
        raise UsageError(f"pool size must be >= 1, got {k}")
    h, w = input.shape[-2:]
    h_out, w_out = h // k, w // k
    if h_out < 1 or w_out < 1:
        raise DimensionError(f"avg_pool2d({k}) needs spatial dims >= {k}, got {h}x{w}")
    lead = input.shape[:-2]
    cropped = input.data[..., : h_out * k, : w_out * k].astype(np.float64)
    value = cropped.reshape(*lead, h_out, k, w_out, k).mean(axis=(-3, -1)).astype(input.dtype)
    out = Tensor._result(value, (input,), "avg_pool2d")
    if out.requires_grad:
        def _backward(g):
            grad = np.zeros(input.shape, dtype=g.dtype)
            spread = np.repeat(np.repeat(g, k, axis=-2), k, axis=-1) / (k * k)
            grad[..., : h_out * k, : w_out * k] = spread
            return (grad,)

        out._backward = _backward
    return out


def fully_connected(input: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y = W x + b for [N] or [B,N] inputs, W of shape [M,N]"""
    if weight.ndim != 2 or input.shape[-1] != weight.shape[1]:
        raise DimensionError(f"fully_connected: input {input.shape} incompatible with weight {weight.shape}")
    single = input.ndim == 1
    x = input.reshape(1, -1) if single else input
    out = x @ weight.transpose()
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"fully_connected bias must be [{weight.shape[0]}], got {bias.shape}")
        out = out + bias
    return out.reshape(weight.shape[0]) if single else out


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean softmax cross-entropy over rows of [N,K] logits"""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    rows = np.arange(len(targets))
    log_probs = log_softmax(logits.data.astype(np.float64), axis=1)
    value = np.asarray(-log_probs[rows, targets].mean(), dtype=logits.dtype)
    out = Tensor._result(value, (logits,), "cross_entropy")
    if out.requires_grad:
        def _backward(g):
            grad = softmax(logits.data.astype(np.float64), axis=1)
            grad[rows, targets] -= 1.0
            return (grad * (float(g) / len(targets)),)

        out._backward = _backward
    return out
