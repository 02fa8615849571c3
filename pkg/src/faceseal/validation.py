"""Input validation helpers shared across the toolkit.

Images use the canonical convention throughout: float tensors/arrays of
shape (3, H, W) or batched (N, 3, H, W), values in [-1, 1].
"""

from __future__ import annotations

import numpy as np
import torch


def check_finite(x: torch.Tensor, name: str = "input") -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def as_image_batch(
    x,
    *,
    size: int | None = None,
    name: str = "image",
    check_range: bool = True,
) -> torch.Tensor:
    """Coerce a single image or a batch into a validated (N, 3, H, W) float tensor.

    Accepts numpy arrays or torch tensors. Rejects non-finite values, wrong
    channel counts, wrong spatial size (when ``size`` is given), and values
    outside the canonical [-1, 1] range (when ``check_range`` is set).
    """
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.ascontiguousarray(x))
    if not isinstance(x, torch.Tensor):
        raise TypeError(f"{name} must be a numpy array or torch tensor, got {type(x).__name__}")
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4 or x.shape[1] != 3:
        raise ValueError(f"{name} must have shape (3, H, W) or (N, 3, H, W), got {tuple(x.shape)}")
    if not x.dtype.is_floating_point:
        raise TypeError(f"{name} must be floating point, got {x.dtype}")
    check_finite(x, name)
    if size is not None and (x.shape[2] != size or x.shape[3] != size):
        raise ValueError(f"{name} spatial size must be {size}x{size}, got {x.shape[2]}x{x.shape[3]}")
    if check_range:
        lo, hi = float(x.min()), float(x.max())
        if lo < -1.0 - 1e-5 or hi > 1.0 + 1e-5:
            raise ValueError(f"{name} values must lie in [-1, 1], got range [{lo:.4g}, {hi:.4g}]")
    return x


def check_bits(bits, length: int | None = None, name: str = "message") -> np.ndarray:
    """Validate a bit vector (or batch of bit vectors); returns int64 array of 0/1."""
    arr = np.asarray(bits)
    if arr.ndim not in (1, 2):
        raise ValueError(f"{name} must be a 1-D bit vector or a 2-D batch, got ndim={arr.ndim}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} entries must all be 0 or 1")
    if length is not None and arr.shape[-1] != length:
        raise ValueError(f"{name} must have {length} bits, got {arr.shape[-1]}")
    return arr.astype(np.int64)


def check_same_shape(a: torch.Tensor, b: torch.Tensor, names: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{names} must have equal shapes, got {tuple(a.shape)} vs {tuple(b.shape)}")
