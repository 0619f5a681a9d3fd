"""Differentiable operators with explicit forward and backward passes.

Every ``*_forward`` returns the output and a cache; the matching
``*_backward`` maps the output gradient (and the cache) to input and
parameter gradients.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.models import UpsampleMode
from planesweep_glr.nn.tensor import Tensor, matmul


@dataclass(frozen=True)
class ConvCache:
    """State saved by :func:`conv2d_forward` for the backward pass."""

    columns: Tensor  # (groups, B*H'*W', Cin/groups*k*k)
    weight: Tensor
    input_shape: tuple[int, ...]
    output_size: tuple[int, int]
    stride: int
    groups: int


def _check_conv(x: Tensor, w: Tensor, b: Tensor, stride: int, groups: int) -> None:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects 4D input and weight, got {x.shape} and {w.shape}")
    _, cin, height, width = x.shape
    cout, cin_g, k, k2 = w.shape
    if k != k2 or k not in (1, 3):
        raise ShapeMismatchError(f"kernel must be 1x1 or 3x3, got {k}x{k2}")
    if groups < 1 or cin % groups or cout % groups:
        raise ShapeMismatchError(f"channels {cin}->{cout} not divisible by groups={groups}")
    if cin // groups != cin_g:
        raise ShapeMismatchError(
            f"weight expects {cin_g} input channels per group, input has {cin // groups}"
        )
    if b.shape != (cout,):
        raise ShapeMismatchError(f"bias must have shape ({cout},), got {b.shape}")
    if stride < 1 or height % stride or width % stride:
        raise ShapeMismatchError(f"spatial size {height}x{width} not divisible by stride {stride}")


def _im2col(x: Tensor, k: int, stride: int, groups: int) -> tuple[Tensor, int, int]:
    """Sliding windows as one contiguous (groups, B*H'*W', Cin/groups*k*k) matrix."""
    batch, cin, _, _ = x.shape
    pad = (k - 1) // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    grouped = windows.reshape(batch, groups, cin // groups, out_h, out_w, k, k)
    columns = np.ascontiguousarray(grouped.transpose(1, 0, 3, 4, 2, 5, 6)).reshape(
        groups, batch * out_h * out_w, (cin // groups) * k * k
    )
    return columns, out_h, out_w


def conv2d_forward(
    x: Tensor, w: Tensor, b: Tensor, stride: int = 1, groups: int = 1
) -> tuple[Tensor, ConvCache]:
    """Grouped 2D cross-correlation with zero same-padding.

    Args:
        x: Input of shape (B, Cin, H, W).
        w: Weight of shape (Cout, Cin/groups, k, k), k in {1, 3}.
        b: Bias of shape (Cout,).
        stride: Spatial stride; H and W must be divisible by it.
        groups: Number of channel groups.

    Returns:
        Output of shape (B, Cout, H/stride, W/stride) and the backward cache.
    """
    _check_conv(x, w, b, stride, groups)
    batch = x.shape[0]
    cout, cin_g, k, _ = w.shape
    columns, out_h, out_w = _im2col(x, k, stride, groups)
    kernels = w.reshape(groups, cout // groups, cin_g * k * k)
    y = matmul(columns, kernels.transpose(0, 2, 1))
    y = y.reshape(groups, batch, out_h, out_w, cout // groups).transpose(1, 0, 4, 2, 3)
    y = y.reshape(batch, cout, out_h, out_w) + b[None, :, None, None]
    return y, ConvCache(columns, w, x.shape, (out_h, out_w), stride, groups)


def conv2d_backward(dy: Tensor, cache: ConvCache) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of :func:`conv2d_forward` with respect to x, w and b."""
    columns, w, stride, groups = cache.columns, cache.weight, cache.stride, cache.groups
    batch, cin, height, width = cache.input_shape
    out_h, out_w = cache.output_size
    cout, cin_g, k, _ = w.shape
    pad = (k - 1) // 2

    dy_rows = np.ascontiguousarray(
        dy.reshape(batch, groups, cout // groups, out_h, out_w).transpose(1, 0, 3, 4, 2)
    ).reshape(groups, batch * out_h * out_w, cout // groups)
    kernels = w.reshape(groups, cout // groups, cin_g * k * k)
    db = dy.sum(axis=(0, 2, 3))
    dw = matmul(dy_rows.transpose(0, 2, 1), columns).reshape(w.shape)
    dcols = matmul(dy_rows, kernels).reshape(groups, batch, out_h, out_w, cin_g, k, k)
    dcols = dcols.transpose(1, 0, 4, 2, 3, 5, 6).reshape(batch, cin, out_h, out_w, k, k)

    dpadded = np.zeros((batch, cin, height + 2 * pad, width + 2 * pad), dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dpadded[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += dcols[..., i, j]
    dx = dpadded[:, :, pad : pad + height, pad : pad + width] if pad else dpadded
    return dx, dw.astype(w.dtype, copy=False), db


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, groups: int = 1) -> Tensor:
    """Forward-only convolution, see :func:`conv2d_forward`."""
    return conv2d_forward(x, w, b, stride=stride, groups=groups)[0]


def relu_forward(x: Tensor) -> tuple[Tensor, Tensor]:
    """ReLU; the cache is the positive mask (subgradient 0 at 0)."""
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: Tensor, mask: Tensor) -> Tensor:
    return dy * mask


def _bilinear_up_axis(x: Tensor, axis: int) -> Tensor:
    # align_corners=False at scale 2: out[2i] = .75 x[i] + .25 x[i-1], out[2i+1] = .75 x[i] + .25 x[i+1]
    x = np.moveaxis(x, axis, -1)
    padded = np.concatenate([x[..., :1], x, x[..., -1:]], axis=-1)
    even = 0.75 * x + 0.25 * padded[..., :-2]
    odd = 0.75 * x + 0.25 * padded[..., 2:]
    out = np.stack([even, odd], axis=-1).reshape(*x.shape[:-1], 2 * x.shape[-1])
    return np.moveaxis(out, -1, axis)


def _bilinear_up_axis_backward(dy: Tensor, axis: int) -> Tensor:
    dy = np.moveaxis(dy, axis, -1)
    pairs = dy.reshape(*dy.shape[:-1], dy.shape[-1] // 2, 2)
    g_even, g_odd = pairs[..., 0], pairs[..., 1]
    dx = 0.75 * (g_even + g_odd)
    dx[..., :-1] += 0.25 * g_even[..., 1:]
    dx[..., 0] += 0.25 * g_even[..., 0]
    dx[..., 1:] += 0.25 * g_odd[..., :-1]
    dx[..., -1] += 0.25 * g_odd[..., -1]
    return np.moveaxis(dx, -1, axis)


def upsample2x(x: Tensor, mode: UpsampleMode | str = UpsampleMode.NEAREST) -> Tensor:
    """Double the two trailing spatial dimensions of a (B, C, H, W) tensor."""
    mode = UpsampleMode(mode)
    if mode is UpsampleMode.NEAREST:
        return x.repeat(2, axis=2).repeat(2, axis=3)
    return _bilinear_up_axis(_bilinear_up_axis(x, 2), 3)


def upsample2x_backward(dy: Tensor, mode: UpsampleMode | str = UpsampleMode.NEAREST) -> Tensor:
    mode = UpsampleMode(mode)
    if mode is UpsampleMode.NEAREST:
        batch, channels, height, width = dy.shape
        return dy.reshape(batch, channels, height // 2, 2, width // 2, 2).sum(axis=(3, 5))
    return _bilinear_up_axis_backward(_bilinear_up_axis_backward(dy, 3), 2)


def avg_pool2x(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2."""
    batch, channels, height, width = x.shape
    if height % 2 or width % 2:
        raise ShapeMismatchError(f"avg_pool2x needs even spatial size, got {height}x{width}")
    return x.reshape(batch, channels, height // 2, 2, width // 2, 2).mean(axis=(3, 5))
