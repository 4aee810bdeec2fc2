"""Coarse temporal compensation with deformable convolution over sliding windows.

Five LR features are aligned inside three overlapping 3-frame windows. Each
neighbor of a window center is resampled at learned per-pixel offsets (a
3x3 grid of sampling points deformed by predicted displacements) and the
window is fused by a 3x3 convolution, yielding three coarse features.
"""

import numpy as np
import torch
import torch.nn as nn

from .blocks import MultiScaleResidualBlock, ResidualBlock, zero_init
from .sampling import bilinear_sample, pixel_grid

# 3x3 sampling grid, row-major: (-1,-1), (-1,0), ..., (1,1).
GRID_POINTS = 9
_GRID_DY = [-1, -1, -1, 0, 0, 0, 1, 1, 1]
_GRID_DX = [-1, 0, 1, -1, 0, 1, -1, 0, 1]


class FeatureExtractor(nn.Module):
    """Shared per-frame LR feature extractor: input conv + 5 residual blocks."""

    def __init__(self, channels=128):
        super().__init__()
        self.conv_in = nn.Conv2d(3, channels, 3, 1, 1)
        self.blocks = nn.Sequential(*[ResidualBlock(channels) for _ in range(5)])
        self.channels = channels

    def forward(self, x):
        """(B, T, 3, H, W) -> (B, T, C, H, W); also accepts (B, 3, H, W)."""
        if x.dim() == 4:
            return self.blocks(self.conv_in(x))
        b, t = x.shape[:2]
        flat = x.reshape(b * t, *x.shape[2:])
        out = self.blocks(self.conv_in(flat))
        return out.reshape(b, t, self.channels, *out.shape[-2:])


def extract_lr_features(extractor, clip, window=5):
    """Per-frame features for a Clip of exactly `window` frames."""
    import numpy as np

    if len(clip) != window:
        raise ValueError(f"expected {window} frames, got {len(clip)}")
    frames = torch.from_numpy(
        np.ascontiguousarray(clip.frames.transpose(0, 3, 1, 2), dtype=np.float32)
    )
    with torch.no_grad():
        feats = extractor(frames)
    return [feats[i] for i in range(window)]


class OffsetPredictor(nn.Module):
    """Predicts per-pixel sampling offsets from a (reference, neighbor) pair.

    Concatenated features pass through a fusion conv and two multi-scale
    residual blocks; the output projection is zero-initialized so offsets
    start at exactly zero, keeping the aligner in the plain-convolution
    regime at initialization.
    """

    def __init__(self, channels, max_offset=10.0):
        super().__init__()
        self.fuse = nn.Conv2d(2 * channels, channels, 3, 1, 1)
        self.msrb = nn.Sequential(
            MultiScaleResidualBlock(channels), MultiScaleResidualBlock(channels)
        )
        self.project = zero_init(nn.Conv2d(channels, 2 * GRID_POINTS, 3, 1, 1))
        self.max_offset = max_offset

    def forward(self, f_ref, f_nbr):
        if f_ref.shape != f_nbr.shape:
            raise ValueError(
                f"feature shapes differ: {tuple(f_ref.shape)} vs {tuple(f_nbr.shape)}"
            )
        raw = self.project(self.msrb(self.fuse(torch.cat([f_ref, f_nbr], dim=1))))
        return raw.clamp(-self.max_offset, self.max_offset)


def predict_offsets(predictor, f_ref, f_nbr):
    """Offset field (2K, H, W) for single (C, H, W) features."""
    with torch.no_grad():
        return predictor(f_ref.unsqueeze(0), f_nbr.unsqueeze(0))[0]


def deformable_sample(feature, offsets, weights):
    """Deformable 3x3 convolution via bilinear gathers.

    feature: (B, C_in, H, W) or (C_in, H, W)
    offsets: matching (B, 2K, H, W) / (2K, H, W), channel pairs (dy_k, dx_k)
             in grid order
    weights: (C_out, C_in, 3, 3) convolution weights

    output(p) = sum_k w[..., k] * bilinear(feature, p + grid_k + offset_k),
    with samples outside the frame contributing zero. With all offsets zero
    this reduces to a dense 3x3 convolution with zero padding.
    """
    squeeze = feature.dim() == 3
    if squeeze:
        feature = feature.unsqueeze(0)
        offsets = offsets.unsqueeze(0)
    b, c_in, h, w = feature.shape
    if offsets.shape != (b, 2 * GRID_POINTS, h, w):
        raise ValueError(
            f"offsets shape {tuple(offsets.shape)} does not match feature "
            f"{tuple(feature.shape)} with K={GRID_POINTS}"
        )
    ygrid, xgrid = pixel_grid(h, w, feature.dtype, feature.device)
    offs = offsets.reshape(b, GRID_POINTS, 2, h, w)
    grid_dy = torch.tensor(_GRID_DY, dtype=feature.dtype, device=feature.device)
    grid_dx = torch.tensor(_GRID_DX, dtype=feature.dtype, device=feature.device)
    ys = ygrid + grid_dy.view(GRID_POINTS, 1, 1) + offs[:, :, 0]
    xs = xgrid + grid_dx.view(GRID_POINTS, 1, 1) + offs[:, :, 1]
    sampled = bilinear_sample(feature, ys.reshape(b, -1), xs.reshape(b, -1))
    sampled = sampled.reshape(b, c_in, GRID_POINTS, h * w)
    w_k = weights.reshape(weights.shape[0], c_in, GRID_POINTS).to(feature.dtype)
    out = torch.einsum("biks,oik->bos", sampled, w_k).reshape(b, -1, h, w)
    return out[0] if squeeze else out


class WindowedAlignment(nn.Module):
    """Three-window coarse compensation over five frame features.

    A single offset predictor and a single deformable convolution weight are
    shared across every (center, neighbor) pair, including the center's own
    self-alignment branch; one fusion conv merges each aligned window.
    """

    def __init__(self, channels, max_offset=10.0):
        super().__init__()
        self.offsets = OffsetPredictor(channels, max_offset)
        self.weight = nn.Parameter(torch.empty(channels, channels, 3, 3))
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)
        self.fuse = nn.Conv2d(3 * channels, channels, 3, 1, 1)
        self.channels = channels

    def align(self, f_ref, f_nbr):
        return deformable_sample(f_nbr, self.offsets(f_ref, f_nbr), self.weight)

    def forward(self, features):
        """(B, 5, C, H, W) -> (B, 3, C, H, W), window centers at indices 1..3."""
        if features.dim() != 5 or features.shape[1] != 5:
            raise ValueError(
                f"expected (B, 5, C, H, W) features, got {tuple(features.shape)}"
            )
        out = []
        for i in (1, 2, 3):
            ref = features[:, i]
            aligned = [self.align(ref, features[:, j]) for j in (i - 1, i, i + 1)]
            out.append(self.fuse(torch.cat(aligned, dim=1)))
        return torch.stack(out, dim=1)


def fuse_window(conv, a, b, c):
    """3x3 convolution over the channel-concatenation [a, b, c]."""
    if not (a.shape == b.shape == c.shape):
        raise ValueError("window features must share a shape")
    squeeze = a.dim() == 3
    stack = torch.cat([a, b, c], dim=-3)
    if squeeze:
        stack = stack.unsqueeze(0)
    out = conv(stack)
    return out[0] if squeeze else out


def compensate_windows(aligner, features):
    """Spec-level entry: list of 5 (C, H, W) features -> 3 coarse features."""
    if len(features) != 5:
        raise ValueError(f"expected 5 features, got {len(features)}")
    stacked = torch.stack(list(features), dim=0).unsqueeze(0)
    with torch.no_grad():
        coarse = aligner(stacked)[0]
    return coarse[0], coarse[1], coarse[2]
