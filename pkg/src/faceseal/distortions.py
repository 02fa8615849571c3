"""Benign image perturbations: five kinds at six levels, plus the
differentiable noise sampler used during training.

Level 0 of every kind is the identity (clean data). Evaluation-time
compression runs a real JPEG codec round trip; the training path uses a
differentiable block-DCT approximation so gradients reach the encoder.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

_GRID_TEXT = resources.files(__package__).joinpath("perturbation_grid.json").read_text()
_GRID = json.loads(_GRID_TEXT)

GRID_VERSION: int = _GRID["version"]
PERTURBATION_KINDS = tuple(_GRID["kinds"])
PERTURBATION_LEVELS = tuple(range(6))


@dataclass(frozen=True)
class PerturbationSpec:
    """One (kind, level) cell of the perturbation grid."""

    kind: str
    level: int

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.level not in PERTURBATION_LEVELS:
            raise ValueError(f"level must be in 0..5, got {self.level}")

    @property
    def parameter(self):
        """The grid cell's scalar parameter; None at level 0 (clean data)."""
        return _GRID["kinds"][self.kind]["levels"][self.level]


def grid_table() -> list[dict]:
    """The perturbation grid as flat machine-readable rows."""
    rows = []
    for kind in PERTURBATION_KINDS:
        for level in PERTURBATION_LEVELS:
            rows.append({
                "kind": kind,
                "level": level,
                "parameter": _GRID["kinds"][kind]["levels"][level],
                "version": GRID_VERSION,
            })
    return rows


# ---------------------------------------------------------------------------
# differentiable approximations (training path)
# ---------------------------------------------------------------------------

def _dct_matrix(dtype: torch.dtype, device) -> torch.Tensor:
    """Orthonormal 8x8 DCT-II matrix."""
    n = 8
    k = torch.arange(n, dtype=dtype, device=device).reshape(n, 1)
    j = torch.arange(n, dtype=dtype, device=device).reshape(1, n)
    mat = torch.cos(math.pi * (j + 0.5) * k / n)
    mat[0] *= 1.0 / math.sqrt(n)
    mat[1:] *= math.sqrt(2.0 / n)
    return mat


def _jpeg_mask(quality: float, dtype: torch.dtype, device) -> torch.Tensor:
    # Soft low-pass over the (u+v) diagonal; the DC coefficient is always kept
    # so constant images pass through unchanged.
    u = torch.arange(8, dtype=dtype, device=device).reshape(8, 1)
    v = torch.arange(8, dtype=dtype, device=device).reshape(1, 8)
    cutoff = 15.0 * quality / 100.0
    mask = (cutoff - (u + v)).clamp(0.0, 1.0)
    mask[0, 0] = 1.0
    return mask


def jpeg_approx(x: torch.Tensor, quality: int) -> torch.Tensor:
    """Differentiable JPEG stand-in: per-8x8-block DCT, quality-dependent soft
    masking of high-frequency coefficients, inverse DCT.

    quality=100 keeps every coefficient (exact identity). Spatial dims that
    are not multiples of 8 are reflect-padded and cropped back.
    """
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    if x.dim() == 3:
        return jpeg_approx(x.unsqueeze(0), quality).squeeze(0)
    n, c, h, w = x.shape
    pad_h = (-h) % 8
    pad_w = (-w) % 8
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
    hh, ww = x.shape[2], x.shape[3]
    dct = _dct_matrix(x.dtype, x.device)
    mask = _jpeg_mask(quality, x.dtype, x.device)
    blocks = x.reshape(n, c, hh // 8, 8, ww // 8, 8).permute(0, 1, 2, 4, 3, 5)
    coeff = dct @ blocks @ dct.T
    coeff = coeff * mask
    out = dct.T @ coeff @ dct
    out = out.permute(0, 1, 2, 4, 3, 5).reshape(n, c, hh, ww)
    return out[:, :, :h, :w]


def _gaussian_kernel_1d(kernel: int, dtype: torch.dtype, device) -> torch.Tensor:
    sigma = kernel / 6.0
    half = kernel // 2
    pos = torch.arange(-half, half + 1, dtype=dtype, device=device)
    weights = torch.exp(-0.5 * (pos / sigma) ** 2)
    return weights / weights.sum()


def gaussian_blur(x: torch.Tensor, kernel: int) -> torch.Tensor:
    """Separable gaussian blur with sigma = kernel/6 and reflect padding."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be an odd integer >= 1, got {kernel}")
    if kernel == 1:
        return x
    if x.dim() == 3:
        return gaussian_blur(x.unsqueeze(0), kernel).squeeze(0)
    c = x.shape[1]
    k1 = _gaussian_kernel_1d(kernel, x.dtype, x.device)
    half = kernel // 2
    x = F.pad(x, (half, half, half, half), mode="reflect")
    x = F.conv2d(x, k1.reshape(1, 1, kernel, 1).expand(c, 1, kernel, 1), groups=c)
    x = F.conv2d(x, k1.reshape(1, 1, 1, kernel).expand(c, 1, 1, kernel), groups=c)
    return x


# ---------------------------------------------------------------------------
# evaluation-only perturbations
# ---------------------------------------------------------------------------

def gaussian_noise(x: torch.Tensor, sigma_8bit: float, rng: np.random.Generator | None = None) -> torch.Tensor:
    """Add i.i.d. zero-mean gaussian noise; sigma is given on the 0-255 pixel
    scale and rescaled to canonical units (sigma' = 2*sigma/255)."""
    if sigma_8bit < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma_8bit == 0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    sigma = 2.0 * sigma_8bit / 255.0
    noise = torch.from_numpy(rng.standard_normal(tuple(x.shape)).astype(np.float64) * sigma)
    return x + noise.to(x.dtype)


def downscale(x: torch.Tensor, ratio: float) -> torch.Tensor:
    """Bilinear resample to floor(ratio*H) x floor(ratio*W) and back up, so
    the output keeps the input geometry."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if ratio == 1:
        return x
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    h, w = x.shape[2], x.shape[3]
    small_h, small_w = max(1, int(ratio * h)), max(1, int(ratio * w))
    small = F.interpolate(x, size=(small_h, small_w), mode="bilinear", align_corners=False)
    out = F.interpolate(small, size=(h, w), mode="bilinear", align_corners=False)
    return out.squeeze(0) if squeeze else out


def random_drop(x: torch.Tensor, holes: int, rng: np.random.Generator | None = None) -> torch.Tensor:
    """Erase ``holes`` random rectangles (each side 10%-20% of the image side),
    filling with the per-image mean color. Pixels outside the rectangles are
    untouched."""
    if holes < 0:
        raise ValueError("holes must be nonnegative")
    if holes == 0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    out = x.clone()
    n, _, h, w = x.shape
    for i in range(n):
        fill = x[i].mean(dim=(1, 2)).reshape(-1, 1, 1)
        for _ in range(holes):
            hh = max(1, int(round(rng.uniform(0.10, 0.20) * h)))
            ww = max(1, int(round(rng.uniform(0.10, 0.20) * w)))
            top = int(rng.integers(0, h - hh + 1))
            left = int(rng.integers(0, w - ww + 1))
            out[i, :, top:top + hh, left:left + ww] = fill
    return out.squeeze(0) if squeeze else out


def true_jpeg(x: torch.Tensor, quality: int) -> torch.Tensor:
    """Round-trip through a real JPEG codec (evaluation path, not differentiable)."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    outs = []
    for img in x:
        arr = img.detach().cpu().numpy()
        u8 = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(u8.transpose(1, 2, 0)).save(buf, format="JPEG", quality=int(quality))
        buf.seek(0)
        back = np.asarray(Image.open(buf).convert("RGB"), dtype=np.float32).transpose(2, 0, 1)
        outs.append(torch.from_numpy(back / 127.5 - 1.0))
    out = torch.stack(outs).to(x.dtype)
    return out.squeeze(0) if squeeze else out


def apply_level(x: torch.Tensor, kind: str, level: int,
                rng: np.random.Generator | None = None) -> torch.Tensor:
    """Apply one grid cell to an image (or batch). Level 0 returns the input
    unchanged; other levels clamp the result to [-1, 1] (publish semantics)."""
    spec = PerturbationSpec(kind, level)
    if level == 0:
        return x
    p = spec.parameter
    if kind == "compression":
        out = true_jpeg(x, int(p))
    elif kind == "downscale":
        out = downscale(x, float(p))
    elif kind == "gaussian_blur":
        out = gaussian_blur(x, int(p))
    elif kind == "gaussian_noise":
        out = gaussian_noise(x, float(p), rng)
    elif kind == "random_drop":
        out = random_drop(x, int(p), rng)
    else:  # unreachable given PerturbationSpec validation
        raise ValueError(f"unknown kind {kind!r}")
    return out.clamp(-1.0, 1.0)


# ---------------------------------------------------------------------------
# training-time noise sampling
# ---------------------------------------------------------------------------

DIFFERENTIABLE_KINDS = ("jpeg_approx", "gaussian_blur")


@dataclass(frozen=True)
class NoiserConfig:
    """Pool of differentiable distortions sampled uniformly per batch."""

    pool: tuple[str, ...] = DIFFERENTIABLE_KINDS
    quality_range: tuple[int, int] = (50, 90)
    kernel_choices: tuple[int, ...] = (3, 5, 7, 9, 11)

    def __post_init__(self):
        if len(self.pool) == 0:
            raise ValueError("noiser pool must not be empty")
        for kind in self.pool:
            if kind not in DIFFERENTIABLE_KINDS:
                raise ValueError(f"{kind!r} is not a differentiable noiser kind")


def sample_noiser(x: torch.Tensor, config: NoiserConfig, rng: np.random.Generator) -> torch.Tensor:
    """Apply one uniformly chosen pool member with a random admissible
    parameter. Gradients flow through to the input."""
    kind = config.pool[int(rng.integers(0, len(config.pool)))]
    if kind == "jpeg_approx":
        quality = int(rng.integers(config.quality_range[0], config.quality_range[1] + 1))
        return jpeg_approx(x, quality)
    kernel = int(config.kernel_choices[int(rng.integers(0, len(config.kernel_choices)))])
    return gaussian_blur(x, kernel)
