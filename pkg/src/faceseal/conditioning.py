"""Attribute conditioning: frozen facial-attribute encoders, the 6-channel
facial token, and the trainable condition map that keys the hidden message.

Three frozen encoders produce 512-dim embeddings for identity, overall
appearance, and the mouth region. Each embedding is rearranged to a 2x16x16
map by pixel shuffle, bilinearly resized to the working resolution, and the
three maps are channel-concatenated into the facial token. A small trainable
convolutional head turns the token into the condition map (one channel per
message bit).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .validation import as_image_batch, check_finite

EMBEDDING_DIM = 512
SHUFFLE_UPSCALE = 16  # 512 = 2 * 16**2
TOKEN_CHANNELS = 6
ATTRIBUTE_KINDS = ("identity", "appearance", "mouth")
DEFAULT_BACKEND = "surrogate-conv-v1"


@dataclass(frozen=True)
class AttributeEncoderSpec:
    """Identifies one frozen attribute encoder.

    ``frozen`` is always true: encoder parameters never receive gradients.
    """

    kind: str
    backend: str = DEFAULT_BACKEND
    frozen: bool = True

    def __post_init__(self):
        if self.kind not in ATTRIBUTE_KINDS:
            raise ValueError(f"unknown attribute kind {self.kind!r}")
        if not self.frozen:
            raise ValueError("attribute encoders are frozen by contract")


def _stable_seed(*parts: str) -> int:
    digest = hashlib.sha256(":".join(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


class SurrogateConvEncoder(nn.Module):
    """Frozen random-weight convolutional encoder producing 512-dim embeddings.

    Weights are drawn once from a generator seeded by (backend, kind), so the
    same spec always yields the same encoder. A small average-pool front end
    makes the embedding tolerant to pixel-level noise. Output embeddings are
    L2-normalized and rescaled to unit per-dimension RMS.
    """

    def __init__(self, kind: str, backend: str = DEFAULT_BACKEND):
        super().__init__()
        gen = torch.Generator().manual_seed(_stable_seed(backend, kind))
        self.smooth = nn.AvgPool2d(3, stride=1, padding=1)
        self.conv1 = nn.Conv2d(3, 16, 5, stride=2, padding=2)
        self.conv2 = nn.Conv2d(16, 32, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(32, 64, 3, stride=2, padding=1)
        self.pool = nn.AdaptiveAvgPool2d(4)
        self.proj = nn.Linear(64 * 16, EMBEDDING_DIM)
        for p in self.parameters():
            with torch.no_grad():
                p.copy_(torch.randn(p.shape, generator=gen) * (1.2 / max(1, p.shape[-1]) ** 0.5
                                                               if p.dim() == 2 else 0.25))
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.smooth(x)
        h = F.leaky_relu(self.conv1(h), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        h = F.leaky_relu(self.conv3(h), 0.2)
        h = self.pool(h).flatten(1)
        e = self.proj(h)
        norm = e.norm(dim=1, keepdim=True).clamp_min(1e-12)
        return e / norm * EMBEDDING_DIM**0.5


ENCODER_BACKENDS = {DEFAULT_BACKEND: SurrogateConvEncoder}


def register_backend(name: str, factory) -> None:
    """Register an encoder backend. ``factory(kind, backend)`` must return a
    frozen nn.Module mapping (N, 3, H, W) images to (N, 512) embeddings."""
    ENCODER_BACKENDS[name] = factory


def build_encoder(spec: AttributeEncoderSpec) -> nn.Module:
    try:
        factory = ENCODER_BACKENDS[spec.backend]
    except KeyError:
        raise KeyError(f"unknown encoder backend {spec.backend!r}; "
                       f"registered: {sorted(ENCODER_BACKENDS)}") from None
    module = factory(spec.kind, spec.backend)
    module.eval()
    return module


class AttributeEncoderBank(nn.Module):
    """The three frozen attribute encoders bound to a working image size.

    Identity and appearance encoders see the full image; the mouth encoder
    sees the lower-third crop.
    """

    def __init__(self, image_size: int, backend: str = DEFAULT_BACKEND):
        super().__init__()
        self.image_size = image_size
        self.backend = backend
        self.specs = tuple(AttributeEncoderSpec(kind, backend) for kind in ATTRIBUTE_KINDS)
        self.identity_enc = build_encoder(self.specs[0])
        self.appearance_enc = build_encoder(self.specs[1])
        self.mouth_enc = build_encoder(self.specs[2])

    @torch.no_grad()
    def extract(self, images) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Extract (identity, appearance, mouth) embeddings for a batch.

        Deterministic for a fixed backend; no gradients reach encoder weights.
        """
        x = as_image_batch(images, size=self.image_size)
        mouth_crop = x[:, :, 2 * x.shape[2] // 3:, :]
        out = (self.identity_enc(x), self.appearance_enc(x), self.mouth_enc(mouth_crop))
        for e in out:
            check_finite(e, "embedding")
        return out


def pixel_shuffle_embedding(values: torch.Tensor, upscale: int = SHUFFLE_UPSCALE) -> torch.Tensor:
    """Rearrange flat embeddings (N, C*r*r) into (N, C, r, r) maps.

    Pure index rearrangement: no values are created or lost.
    """
    if values.dim() == 1:
        values = values.unsqueeze(0)
    n, length = values.shape
    if length % (upscale * upscale) != 0:
        raise ValueError(f"embedding length {length} is not divisible by upscale^2={upscale * upscale}")
    return F.pixel_shuffle(values.reshape(n, length, 1, 1), upscale)


def assemble_facial_token(identity: torch.Tensor, appearance: torch.Tensor,
                          mouth: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Build the (N, 6, H, W) facial token from three 512-dim embeddings.

    Each embedding is pixel-shuffled to 2x16x16, bilinearly resized to the
    working resolution, and concatenated in fixed (identity, appearance,
    mouth) order.
    """
    if height < SHUFFLE_UPSCALE or width < SHUFFLE_UPSCALE:
        raise ValueError(f"target size must be at least {SHUFFLE_UPSCALE}, got {height}x{width}")
    planes = []
    for emb in (identity, appearance, mouth):
        if emb.dim() == 1:
            emb = emb.unsqueeze(0)
        if emb.shape[1] != EMBEDDING_DIM:
            raise ValueError(f"embeddings must have {EMBEDDING_DIM} dims, got {emb.shape[1]}")
        check_finite(emb, "embedding")
        small = pixel_shuffle_embedding(emb)
        planes.append(F.interpolate(small, size=(height, width), mode="bilinear", align_corners=False))
    return torch.cat(planes, dim=1)


class ConditionGenerator(nn.Module):
    """Trainable head mapping the facial token to the condition map.

    Two 7x7 convolutions with a ReLU in between; output has one channel per
    message bit. Deterministic in eval mode.
    """

    def __init__(self, message_bits: int, width: int = 24):
        super().__init__()
        self.message_bits = message_bits
        self.net = nn.Sequential(
            nn.Conv2d(TOKEN_CHANNELS, width, 7, padding=3),
            nn.ReLU(),
            nn.Conv2d(width, message_bits, 7, padding=3),
        )

    def forward(self, token: torch.Tensor) -> torch.Tensor:
        if token.dim() != 4 or token.shape[1] != TOKEN_CHANNELS:
            raise ValueError(f"facial token must be (N, {TOKEN_CHANNELS}, H, W), got {tuple(token.shape)}")
        return self.net(token)


def embedding_to_bytes(embedding: torch.Tensor) -> bytes:
    """Serialize one embedding as flat little-endian float32 bytes (debug export)."""
    arr = embedding.detach().cpu().numpy().astype("<f4").ravel()
    return arr.tobytes()
