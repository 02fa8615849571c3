"""The full watermarking model: frozen attribute encoders, condition
generator, message encoder/decoder, and the adversarial pair, plus versioned
checkpoint serialization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from . import codec
from .adversary import Critic, Eraser
from .conditioning import (AttributeEncoderBank, ConditionGenerator, DEFAULT_BACKEND,
                           assemble_facial_token)
from .validation import as_image_batch

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 128
    message_bits: int = 32
    alpha: float = 0.1
    backend: str = DEFAULT_BACKEND
    cond_width: int = 24
    enc_width: int = 24
    dec_width: int = 32
    critic_width: int = 16
    eraser_width: int = 16

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


class WatermarkModel(nn.Module):
    """End-to-end model. The attribute encoders are frozen; the condition
    generator and message encoder form the embedding side (theta), the
    decoder is phi, and critic/eraser are the adversarial pair."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoders = AttributeEncoderBank(config.image_size, config.backend)
        self.condition_gen = ConditionGenerator(config.message_bits, config.cond_width)
        self.msg_encoder = codec.MessageEncoder(config.message_bits, config.alpha, config.enc_width)
        self.msg_decoder = codec.MessageDecoder(config.message_bits, config.dec_width)
        self.critic = Critic(config.critic_width)
        self.eraser = Eraser(config.eraser_width)

    # -- parameter groups ----------------------------------------------------

    def embedding_parameters(self):
        """theta + phi: everything the main training step updates."""
        yield from self.condition_gen.parameters()
        yield from self.msg_encoder.parameters()
        yield from self.msg_decoder.parameters()

    def adversarial_parameters(self):
        yield from self.critic.parameters()
        yield from self.eraser.parameters()

    # -- forward pieces --------------------------------------------------------

    def facial_token(self, images: torch.Tensor) -> torch.Tensor:
        ident, app, mouth = self.encoders.extract(images)
        size = self.config.image_size
        return assemble_facial_token(ident, app, mouth, size, size)

    def condition_map(self, images: torch.Tensor) -> torch.Tensor:
        """Condition maps keyed to the images' facial attributes."""
        return self.condition_gen(self.facial_token(images))

    def embed(self, images, bits, condition: torch.Tensor | None = None) -> torch.Tensor:
        """Watermark a batch: inject each message under the image's own
        condition map (or a precomputed one)."""
        x = as_image_batch(images, size=self.config.image_size)
        x = x.to(next(self.msg_encoder.parameters()).dtype)
        if condition is None:
            condition = self.condition_map(x)
        repeated = codec.duplicate_message(bits, x.shape[2], x.shape[3], dtype=x.dtype)
        conditional = codec.transform_message(repeated, condition)
        return self.msg_encoder(x, conditional)

    def decode_with_condition(self, images: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        return codec.decode_logits(self.msg_decoder(images), condition)

    @torch.no_grad()
    def extract(self, images) -> torch.Tensor:
        """Decode logits using the condition map computed from the input
        image itself (the deployment-time path)."""
        x = as_image_batch(images, size=self.config.image_size)
        x = x.to(next(self.msg_decoder.parameters()).dtype)
        return self.decode_with_condition(x, self.condition_map(x))

    @torch.no_grad()
    def extract_bits(self, images) -> np.ndarray:
        return codec.logits_to_bits(self.extract(images))


def save_checkpoint(path, model: WatermarkModel, step: int = 0,
                    extra: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "config_digest": model.config.digest(),
        "step": step,
        "state": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[WatermarkModel, int, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format in {path}")
    config = ModelConfig(**payload["config"])
    if config.digest() != payload["config_digest"]:
        raise ValueError("checkpoint config digest mismatch")
    model = WatermarkModel(config)
    model.load_state_dict(payload["state"])
    model.eval()
    return model, int(payload["step"]), payload.get("extra", {})
