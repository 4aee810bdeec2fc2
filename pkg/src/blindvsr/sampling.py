"""Bilinear gather with zero fill outside the frame.

Written with explicit gathers rather than grid_sample so the out-of-bounds
convention is exact (samples outside the frame contribute zero) and the
operation differentiates cleanly in double precision for gradient checks.
"""

import torch


def bilinear_sample(feature, ys, xs):
    """Sample feature (B, C, H, W) at continuous pixel coords (B, S).

    Returns (B, C, S). Each of the four neighbor taps contributes zero when
    it falls outside the frame, so a sample point straddling the border is
    partially attenuated and a fully outside point reads exactly zero.
    Differentiable w.r.t. feature values and sample coordinates.
    """
    b, c, h, w = feature.shape
    flat = feature.reshape(b, c, h * w)
    y0 = torch.floor(ys)
    x0 = torch.floor(xs)
    wy = ys - y0
    wx = xs - x0
    out = None
    for dy, fy in ((0, 1.0 - wy), (1, wy)):
        yi = y0 + dy
        inside_y = (yi >= 0) & (yi <= h - 1)
        yc = yi.clamp(0, h - 1).long()
        for dx, fx in ((0, 1.0 - wx), (1, wx)):
            xi = x0 + dx
            inside = inside_y & (xi >= 0) & (xi <= w - 1)
            xc = xi.clamp(0, w - 1).long()
            idx = (yc * w + xc).unsqueeze(1).expand(b, c, ys.shape[1])
            tap = flat.gather(2, idx) * (fy * fx * inside).unsqueeze(1)
            out = tap if out is None else out + tap
    return out


def sample_grid(feature, ygrid, xgrid):
    """Like bilinear_sample but with (B, H', W') coordinate grids -> (B, C, H', W')."""
    b = feature.shape[0]
    hh, ww = ygrid.shape[-2], ygrid.shape[-1]
    out = bilinear_sample(feature, ygrid.reshape(b, -1), xgrid.reshape(b, -1))
    return out.reshape(b, feature.shape[1], hh, ww)


def pixel_grid(h, w, dtype, device):
    """(H, W) tensors of row and column pixel indices."""
    ys = torch.arange(h, dtype=dtype, device=device)
    xs = torch.arange(w, dtype=dtype, device=device)
    return torch.meshgrid(ys, xs, indexing="ij")
