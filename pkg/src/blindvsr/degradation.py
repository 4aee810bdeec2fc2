"""Blur-kernel synthesis, clip degradation, and training-pair sampling.

The degradation applied to a ground-truth clip is a per-frame blur with a
normalized kernel followed by antialiased bicubic downsampling. All
functions here are pure given their inputs; batch sampling is deterministic
per (seed, sample index) so data loading can be partitioned across workers.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from .resample import blur_tensor, resize_tensor, scale_size, PAD_MODES

DIHEDRAL_OPS = 8


@dataclass
class BlurKernel:
    """Non-negative 2D convolution filter normalized to unit sum."""

    values: np.ndarray
    sigma_hint: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"kernel must be square, got shape {self.values.shape}")
        if self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.size}")
        if np.any(self.values < 0):
            raise ValueError("kernel values must be non-negative")
        total = self.values.sum()
        if not np.isclose(total, 1.0, atol=1e-6):
            raise ValueError(f"kernel must sum to 1, got {total}")

    @property
    def size(self):
        return self.values.shape[0]


@dataclass
class Clip:
    """Ordered frame sequence, each frame (H, W, 3) with values in [0, 1]."""

    frames: np.ndarray
    frame_rate_hint: float | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"frames must be (T, H, W, 3), got {self.frames.shape}")
        if len(self.frames) < 1:
            raise ValueError("clip must contain at least one frame")
        if not np.isfinite(self.frames).all():
            raise ValueError("clip contains non-finite values")
        self.frames = np.clip(self.frames, 0.0, 1.0)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]


@dataclass
class DegradationSpec:
    """Blur kernel + downsampling factor + boundary policy for the blur."""

    kernel: BlurKernel
    scale: int = 4
    boundary_mode: str = "reflect"

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.boundary_mode not in PAD_MODES:
            raise ValueError(f"unknown boundary mode {self.boundary_mode!r}")


def make_gaussian_kernel(size, sigma):
    """Isotropic Gaussian kernel sampled at integer offsets, unit sum.

    size must be odd; sigma is the standard deviation in pixels.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    values = np.exp(-(yy**2 + xx**2) / (2.0 * sigma**2))
    return BlurKernel(values / values.sum(), sigma_hint=float(sigma))


def _to_tensor(frame):
    frame = np.asarray(frame)
    single = frame.ndim == 2
    if single:
        frame = frame[:, :, None]
    t = torch.from_numpy(np.ascontiguousarray(frame.transpose(2, 0, 1))).unsqueeze(0)
    return t, single


def _from_tensor(t, single):
    out = t.squeeze(0).numpy().transpose(1, 2, 0)
    return out[:, :, 0] if single else out


def blur_frame(frame, kernel, boundary="reflect"):
    """2D correlation of each channel with the kernel, same output shape."""
    t, single = _to_tensor(frame)
    out = blur_tensor(t, torch.from_numpy(kernel.values).to(t.dtype), boundary)
    return _from_tensor(out, single)


def bicubic_resize(frame, scale_num, scale_den):
    """Bicubic resize by the rational factor scale_num/scale_den.

    Downsampling applies an antialias prefilter (the cubic kernel stretched
    by the scale factor).
    """
    t, single = _to_tensor(frame)
    out_h = scale_size(t.shape[-2], scale_num, scale_den)
    out_w = scale_size(t.shape[-1], scale_num, scale_den)
    return _from_tensor(resize_tensor(t, out_h, out_w), single)


def degrade_clip(gt, spec):
    """Per-frame blur then bicubic downsample by spec.scale."""
    if gt.height % spec.scale != 0 or gt.width % spec.scale != 0:
        raise ValueError(
            f"clip dims {gt.height}x{gt.width} not divisible by scale {spec.scale}"
        )
    frames = torch.from_numpy(np.ascontiguousarray(gt.frames.transpose(0, 3, 1, 2)))
    kernel = torch.from_numpy(spec.kernel.values).to(frames.dtype)
    blurred = blur_tensor(frames, kernel, spec.boundary_mode)
    lr = resize_tensor(blurred, gt.height // spec.scale, gt.width // spec.scale)
    return Clip(lr.numpy().transpose(0, 2, 3, 1), frame_rate_hint=gt.frame_rate_hint)


@dataclass
class TrainingDataset:
    """Ground-truth clips plus the degradation settings used for sampling.

    Clips whose dims are not multiples of the scale are cropped (top-left)
    at construction.
    """

    clips: list
    scale: int = 4
    window: int = 5
    kernel_size: int = 13
    sigma_range: tuple = (0.4, 2.0)
    boundary_mode: str = "reflect"

    def __post_init__(self):
        if not self.clips:
            raise ValueError("dataset must contain at least one clip")
        if self.window % 2 == 0 or self.window < 1:
            raise ValueError(f"window must be odd, got {self.window}")
        lo, hi = self.sigma_range
        if lo <= 0 or hi < lo:
            raise ValueError(f"invalid sigma range {self.sigma_range}")
        cropped = []
        for clip in self.clips:
            if len(clip) < self.window:
                raise ValueError(
                    f"clip of length {len(clip)} shorter than window {self.window}"
                )
            h = clip.height - clip.height % self.scale
            w = clip.width - clip.width % self.scale
            if (h, w) != (clip.height, clip.width):
                clip = Clip(clip.frames[:, :h, :w], clip.frame_rate_hint)
            cropped.append(clip)
        self.clips = cropped


@dataclass
class TrainingBatch:
    """Degraded LR windows with the aligned GT mid-frame patch and true kernel."""

    lr: np.ndarray       # (B, T, 3, h, w) float32
    gt_mid: np.ndarray   # (B, 3, h*s, w*s) float32
    kernels: np.ndarray  # (B, k, k) float32
    sigmas: np.ndarray   # (B,) float64


def apply_dihedral(arr, op):
    """One of the 8 axis-aligned flips/rotations, acting on the last two axes."""
    if not 0 <= op < DIHEDRAL_OPS:
        raise ValueError(f"dihedral op must be in [0, 8), got {op}")
    if op >= 4:
        arr = np.flip(arr, axis=-1)
    return np.rot90(arr, op % 4, axes=(-2, -1))


def sample_training_example(dataset, index, lr_patch, seed):
    """Deterministic single training example for (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(index)]))
    clip = dataset.clips[rng.integers(len(dataset.clips))]
    start = int(rng.integers(len(clip) - dataset.window + 1))
    sigma = float(rng.uniform(*dataset.sigma_range))
    kernel = make_gaussian_kernel(dataset.kernel_size, sigma)
    spec = DegradationSpec(kernel, dataset.scale, dataset.boundary_mode)
    window = Clip(clip.frames[start : start + dataset.window])
    lr = degrade_clip(window, spec)
    if lr_patch > lr.height or lr_patch > lr.width:
        raise ValueError(
            f"patch {lr_patch} larger than LR frame {lr.height}x{lr.width}"
        )
    y0 = int(rng.integers(lr.height - lr_patch + 1))
    x0 = int(rng.integers(lr.width - lr_patch + 1))
    op = int(rng.integers(DIHEDRAL_OPS))
    s = dataset.scale
    lr_frames = lr.frames[:, y0 : y0 + lr_patch, x0 : x0 + lr_patch]
    gt_mid = window.frames[
        dataset.window // 2,
        y0 * s : (y0 + lr_patch) * s,
        x0 * s : (x0 + lr_patch) * s,
    ]
    lr_tchw = apply_dihedral(lr_frames.transpose(0, 3, 1, 2), op)
    gt_chw = apply_dihedral(gt_mid.transpose(2, 0, 1), op)
    return (
        np.ascontiguousarray(lr_tchw, dtype=np.float32),
        np.ascontiguousarray(gt_chw, dtype=np.float32),
        kernel.values.astype(np.float32),
        sigma,
    )


def sample_training_batch(dataset, batch_size, lr_patch, seed):
    """Batch of training examples, deterministic for a given seed.

    Augmentation (one of the 8 dihedral ops) is applied identically across
    the frames of each sample; the GT kernel is returned unchanged because
    synthesized kernels are isotropic.
    """
    if batch_size < 1:
        raise ValueError(f"batch size must be positive, got {batch_size}")
    samples = [
        sample_training_example(dataset, i, lr_patch, seed) for i in range(batch_size)
    ]
    return TrainingBatch(
        lr=np.stack([s[0] for s in samples]),
        gt_mid=np.stack([s[1] for s in samples]),
        kernels=np.stack([s[2] for s in samples]),
        sigmas=np.array([s[3] for s in samples]),
    )
