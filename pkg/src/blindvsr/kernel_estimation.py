"""Blur-kernel estimation and latent sharp-frame recovery.

A small convolutional network predicts a normalized blur kernel from the LR
mid-frame; it is trained with a self-supervised cycle loss (upsample, blur
with the predicted kernel, downsample, compare to the input). The predicted
kernel then drives a regularized frequency-domain deconvolution whose output
feeds the sharp feature extractor.
"""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.optimize import minimize_scalar

from .blocks import ResidualBlock
from .degradation import BlurKernel
from .resample import blur_tensor, resize_tensor, scale_size


class KernelEstimator(nn.Module):
    """Maps an LR RGB frame to a normalized blur kernel.

    Five stride-1 conv layers, global average pooling, and a linear head
    whose logits pass through a softmax, so the output is a valid kernel
    (non-negative, unit sum) for any weights.
    """

    RECEPTIVE_FIELD = 11

    def __init__(self, kernel_size=13, width=64):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        self.kernel_size = kernel_size
        layers = []
        c_in = 3
        for _ in range(5):
            layers += [nn.Conv2d(c_in, width, 3, 1, 1), nn.ReLU(inplace=True)]
            c_in = width
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(width, kernel_size * kernel_size)

    def forward(self, x):
        if x.shape[-2] < self.RECEPTIVE_FIELD or x.shape[-1] < self.RECEPTIVE_FIELD:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} smaller than receptive field "
                f"{self.RECEPTIVE_FIELD}"
            )
        feat = self.body(x).mean(dim=(2, 3))
        logits = self.head(feat)
        k = self.kernel_size
        return torch.softmax(logits, dim=-1).reshape(-1, k, k)


def estimate_kernel(estimator, lr_mid):
    """Run the estimator on one (H, W, 3) frame and wrap the result."""
    frame = np.asarray(lr_mid, dtype=np.float32)
    with torch.no_grad():
        t = torch.from_numpy(frame.transpose(2, 0, 1)).unsqueeze(0)
        values = estimator(t)[0].double().numpy()
    return BlurKernel(values / values.sum())


def kernel_cycle_loss(lr_mid, est_kernel, scale, boundary="reflect"):
    """Self-supervised L1 cycle loss for the kernel estimator.

    Upsamples the LR mid-frame by the scale factor, blurs with the estimated
    kernel, downsamples back, and returns the mean absolute difference
    against the input. Accepts torch tensors (B, 3, H, W) with kernels
    (B, k, k), or a single numpy frame with a BlurKernel.
    """
    if isinstance(lr_mid, np.ndarray):
        lr_mid = torch.from_numpy(
            np.ascontiguousarray(lr_mid.transpose(2, 0, 1))
        ).unsqueeze(0)
    if isinstance(est_kernel, BlurKernel):
        est_kernel = torch.from_numpy(est_kernel.values).to(lr_mid.dtype).unsqueeze(0)
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    h, w = lr_mid.shape[-2:]
    up = resize_tensor(lr_mid, h * scale, w * scale)
    blurred = blur_tensor(up, est_kernel, boundary)
    cycle = resize_tensor(blurred, h, w)
    return (cycle - lr_mid).abs().mean()


def kernel_to_otf(kernel, shape):
    """FFT of the kernel zero-padded to `shape` with its center tap at (0, 0).

    kernel: (k, k) or (B, k, k); returns a complex tensor broadcastable
    against an FFT of matching spatial shape.
    """
    h, w = shape
    k = kernel.shape[-1]
    if k > h or k > w:
        raise ValueError(f"kernel size {k} exceeds frame size {h}x{w}")
    batch = kernel.shape[:-2]
    padded = kernel.new_zeros(batch + (h, w))
    padded[..., :k, :k] = kernel
    padded = torch.roll(padded, shifts=(-(k // 2), -(k // 2)), dims=(-2, -1))
    return torch.fft.fft2(padded)


def wiener_deconvolve_circular(image, kernel, eps):
    """Regularized inverse filter under a circular blur model.

    Per channel: ifft( conj(K) * fft(image) / (|K|^2 + eps) ) where K is the
    kernel's optical transfer function. No padding or clamping; the raw
    closed form, so frequency-domain identities hold exactly.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    otf = kernel_to_otf(kernel, image.shape[-2:])
    while otf.dim() < image.dim():
        otf = otf.unsqueeze(-3)
    spectrum = torch.fft.fft2(image)
    recovered = torch.conj(otf) * spectrum / (otf.abs() ** 2 + eps)
    return torch.fft.ifft2(recovered).real


def fft_deconvolve(lr_mid, kernel, eps=1e-3, pad=8):
    """Latent sharp frame via Wiener deconvolution, clamped to [0, 1].

    Frames are treated as circular after `pad` pixels of reflect pre-padding
    (then cropped back), which suppresses wrap-around ringing without
    changing the closed form. Accepts a numpy (H, W, 3) frame with a
    BlurKernel, or torch (B, 3, H, W) with kernels (B, k, k).
    """
    numpy_input = isinstance(lr_mid, np.ndarray)
    if numpy_input:
        image = torch.from_numpy(
            np.ascontiguousarray(np.asarray(lr_mid).transpose(2, 0, 1))
        ).unsqueeze(0)
    else:
        image = lr_mid
    if isinstance(kernel, BlurKernel):
        kernel = torch.from_numpy(kernel.values).to(image.dtype)
    if pad > 0:
        image = F.pad(image, (pad, pad, pad, pad), mode="reflect")
    out = wiener_deconvolve_circular(image, kernel, eps)
    if pad > 0:
        out = out[..., pad:-pad, pad:-pad]
    out = out.clamp(0.0, 1.0)
    if numpy_input:
        return out.squeeze(0).numpy().transpose(1, 2, 0)
    return out


class SharpFeatureNet(nn.Module):
    """Two conv layers plus two residual blocks; output C x H x W."""

    def __init__(self, channels=128):
        super().__init__()
        self.conv1 = nn.Conv2d(3, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.block1 = ResidualBlock(channels)
        self.block2 = ResidualBlock(channels)

    def forward(self, x):
        x = self.conv2(F.relu(self.conv1(x)))
        return self.block2(self.block1(x))


def extract_sharp_features(net, sharp):
    """Feature map for one (H, W, 3) frame -> torch (C, H, W)."""
    frame = np.asarray(sharp, dtype=np.float32)
    with torch.no_grad():
        t = torch.from_numpy(frame.transpose(2, 0, 1)).unsqueeze(0)
        return net(t)[0]


def fit_gaussian_sigma(kernel):
    """Least-squares isotropic Gaussian width of a kernel grid."""
    values = kernel.values if isinstance(kernel, BlurKernel) else np.asarray(kernel)
    size = values.shape[0]
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    r2 = yy**2 + xx**2

    def objective(sigma):
        g = np.exp(-r2 / (2.0 * sigma**2))
        g /= g.sum()
        return float(((values - g) ** 2).sum())

    result = minimize_scalar(objective, bounds=(0.05, size), method="bounded")
    return float(result.x)


def save_kernel_text(kernel, path):
    """Plain-text grid dump, one row of reals per line."""
    np.savetxt(path, kernel.values, fmt="%.10e")


def load_kernel_text(path):
    return BlurKernel(np.loadtxt(path, dtype=np.float64))


def render_kernel_heatmap(kernel, path):
    """PNG heat map of the kernel for visual inspection."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.imsave(path, kernel.values, cmap="viridis")
