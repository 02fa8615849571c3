"""Message codec: spatial duplication, condition coupling, bounded-residual
injection, and multiply-and-pool decoding.

Bits are mapped to symbols -1/+1, repeated over the spatial grid, multiplied
elementwise with the condition map, and injected into the image as a residual
bounded by alpha through a tanh squash. Decoding runs the image through a
small convolutional net and pools the product of the recovered map with a
condition map into one logit per bit; bit i decodes as logit_i > 0.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .validation import check_same_shape


def bits_to_symbols(bits) -> torch.Tensor:
    """Map bits {0,1} to symbols {-1,+1} as a float tensor (batch preserved)."""
    if isinstance(bits, np.ndarray):
        bits = torch.from_numpy(bits)
    bits = bits.float() if not bits.dtype.is_floating_point else bits
    return bits * 2.0 - 1.0


def duplicate_message(bits, height: int, width: int, dtype=torch.float32) -> torch.Tensor:
    """Spatially repeat a message into a (N, C_m, H, W) map of -1/+1 symbols.

    Channel i is constant, holding the symbol of bit i.
    """
    if height <= 0 or width <= 0:
        raise ValueError("height and width must be positive")
    sym = bits_to_symbols(bits).to(dtype)
    if sym.dim() == 1:
        sym = sym.unsqueeze(0)
    if sym.dim() != 2:
        raise ValueError(f"bits must be a vector or (N, C_m) batch, got {tuple(sym.shape)}")
    n, c = sym.shape
    return sym.reshape(n, c, 1, 1).expand(n, c, height, width)


def transform_message(repeated: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
    """Couple the repeated message with the condition map (elementwise product)."""
    check_same_shape(repeated, condition, "repeated message and condition map")
    return repeated * condition


class MessageEncoder(nn.Module):
    """Residual injection head: two 7x7 convolutions over the channel
    concatenation of image and conditional message.

    The watermarked image is x + alpha * tanh(head(x, cm)), so every pixel of
    the residual is bounded by alpha. The output convolution starts at zero,
    which makes the untrained encoder an exact identity; training grows the
    residual only as much as decoding pressure demands.
    """

    def __init__(self, message_bits: int, alpha: float = 0.1, width: int = 24):
        super().__init__()
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        self.alpha = alpha
        self.net = nn.Sequential(
            nn.Conv2d(3 + message_bits, width, 7, padding=3),
            nn.ReLU(),
            nn.Conv2d(width, 3, 7, padding=3),
        )
        nn.init.zeros_(self.net[-1].weight)
        nn.init.zeros_(self.net[-1].bias)

    def residual(self, image: torch.Tensor, conditional_message: torch.Tensor) -> torch.Tensor:
        if image.shape[0] != conditional_message.shape[0] or image.shape[2:] != conditional_message.shape[2:]:
            raise ValueError("image and conditional message disagree on batch or spatial dims")
        raw = self.net(torch.cat([image, conditional_message], dim=1))
        return self.alpha * torch.tanh(raw)

    def forward(self, image: torch.Tensor, conditional_message: torch.Tensor) -> torch.Tensor:
        return image + self.residual(image, conditional_message)


class MessageDecoder(nn.Module):
    """Recovers the conditional-message map from an image (three 3x3 convs)."""

    def __init__(self, message_bits: int, width: int = 32):
        super().__init__()
        self.message_bits = message_bits
        self.net = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, width, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, message_bits, 3, padding=1),
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.net(image)


def decode_logits(recovered_map: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
    """Pool a recovered map against a condition map into per-bit logits.

    logit_i = spatial mean of (recovered_map_i * condition_i). This is the
    adjoint of the encoding-side product, so a matched condition map undoes
    the coupling while a foreign one scrambles it.
    """
    check_same_shape(recovered_map, condition, "recovered map and condition map")
    return (recovered_map * condition).mean(dim=(2, 3))


def cross_decode_logits(recovered_map: torch.Tensor, conditions: torch.Tensor) -> torch.Tensor:
    """All-pairs pooling: logits[k, q] decodes image k under condition q.

    Returns (N, Q, C_m); the diagonal holds matched-condition logits.
    """
    if recovered_map.shape[1:] != conditions.shape[1:]:
        raise ValueError("recovered map and condition maps disagree on channel/spatial dims")
    hw = recovered_map.shape[2] * recovered_map.shape[3]
    return torch.einsum("kchw,qchw->kqc", recovered_map, conditions) / hw


def logits_to_bits(logits: torch.Tensor) -> np.ndarray:
    """Threshold logits at zero into a bit array (int64, same leading shape)."""
    return (logits.detach().cpu().numpy() > 0).astype(np.int64)
