"""Differentiable blur and bicubic resampling cores.

These torch primitives back both the degradation pipeline and the
self-supervised kernel-cycle loss, so they must be differentiable with
respect to the image and the blur kernel.
"""

import functools

import numpy as np
import torch
import torch.nn.functional as F

PAD_MODES = ("reflect", "replicate", "circular", "zeros")


def cubic_weight(x, a=-0.5):
    """Keys cubic kernel with free parameter a (vectorized over numpy x)."""
    x = np.abs(x)
    w = np.zeros_like(x)
    near = x <= 1.0
    far = (x > 1.0) & (x < 2.0)
    w[near] = (a + 2.0) * x[near] ** 3 - (a + 3.0) * x[near] ** 2 + 1.0
    w[far] = a * x[far] ** 3 - 5.0 * a * x[far] ** 2 + 8.0 * a * x[far] - 4.0 * a
    return w


@functools.lru_cache(maxsize=None)
def _resize_matrix_np(in_size, out_size):
    """Dense (out_size, in_size) bicubic weight matrix, float64.

    Source coordinates follow the half-pixel convention
    src = (dst + 0.5) * in/out - 0.5. When downsampling, the kernel is
    stretched by the scale factor (antialias prefilter). Taps falling
    outside the image fold onto the edge pixel, and each row is
    normalized to sum to one.
    """
    if in_size <= 0 or out_size <= 0:
        raise ValueError(f"sizes must be positive, got {in_size} -> {out_size}")
    scale = in_size / out_size
    stretch = max(scale, 1.0)
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    support = 2.0 * stretch
    for o in range(out_size):
        center = (o + 0.5) * scale - 0.5
        lo = int(np.ceil(center - support))
        hi = int(np.floor(center + support))
        taps = np.arange(lo, hi + 1)
        weights = cubic_weight((taps - center) / stretch)
        for j, w in zip(taps, weights):
            matrix[o, min(max(j, 0), in_size - 1)] += w
        matrix[o] /= matrix[o].sum()
    return matrix


@functools.lru_cache(maxsize=None)
def _resize_matrix(in_size, out_size, dtype, device):
    return torch.from_numpy(_resize_matrix_np(in_size, out_size)).to(dtype=dtype, device=device)


def resize_tensor(x, out_h, out_w):
    """Separable bicubic resize of a (..., H, W) tensor to (..., out_h, out_w)."""
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = x.shape[-2], x.shape[-1]
    mh = _resize_matrix(h, out_h, x.dtype, x.device)
    mw = _resize_matrix(w, out_w, x.dtype, x.device)
    x = torch.einsum("oh,...hw->...ow", mh, x)
    x = torch.einsum("pw,...hw->...hp", mw, x)
    return x


def scale_size(size, num, den):
    """Integer result of size*num/den, rejecting inexact ratios."""
    if num <= 0 or den <= 0:
        raise ValueError(f"scale must be positive, got {num}/{den}")
    if (size * num) % den != 0:
        raise ValueError(f"size {size} not divisible under scale {num}/{den}")
    return size * num // den


def blur_tensor(x, kernel, boundary="reflect"):
    """Channel-wise 2D correlation of x (B, C, H, W) with a blur kernel.

    kernel is (k, k) shared across the batch or (B, k, k) per sample.
    Boundary handling is applied by padding before the valid correlation,
    so the output keeps the input's spatial size.
    """
    if boundary not in PAD_MODES:
        raise ValueError(f"unknown boundary mode {boundary!r}, expected one of {PAD_MODES}")
    b, c, h, w = x.shape
    k = kernel.shape[-1]
    if kernel.shape[-2] != k or k % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {tuple(kernel.shape)}")
    if k > h or k > w:
        raise ValueError(f"kernel size {k} exceeds frame size {h}x{w}")
    pad = k // 2
    mode = "constant" if boundary == "zeros" else boundary
    x = F.pad(x.reshape(1, b * c, h, w), (pad, pad, pad, pad), mode=mode)
    if kernel.dim() == 2:
        weight = kernel.reshape(1, 1, k, k).expand(b * c, 1, k, k)
    else:
        weight = kernel.reshape(b, 1, 1, k, k).expand(b, c, 1, k, k).reshape(b * c, 1, k, k)
    out = F.conv2d(x, weight.to(x.dtype), groups=b * c)
    return out.reshape(b, c, h, w)
