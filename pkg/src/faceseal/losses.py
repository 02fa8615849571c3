"""Training objectives: message reconstruction, post-noise reconstruction,
the adversarial minimax value, the contrastive fragility loss, and their
weighted combination.

The total objective is  w_r*L_r + w_n*L_n - w_a*L_a + w_f*L_f : the
encoder/decoder maximize the adversarial value while the critic/eraser
minimize it in their own step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .distortions import NoiserConfig, sample_noiser


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative weights for the four loss terms (defaults 1, 1, 0.1, 1)."""

    recon: float = 1.0
    noise: float = 1.0
    adversarial: float = 0.1
    fragile: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be nonnegative, got {value}")


def _as_bit_tensor(bits, like: torch.Tensor) -> torch.Tensor:
    if isinstance(bits, np.ndarray):
        bits = torch.from_numpy(bits)
    return bits.to(like.dtype).reshape(like.shape)


def recon_loss(bits, logits: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy between message bits and decoded logits."""
    if np.prod(np.asarray(bits).shape) != logits.numel():
        raise ValueError("message and logits lengths differ")
    target = _as_bit_tensor(bits, logits)
    return F.binary_cross_entropy_with_logits(logits, target)


def noise_loss(bits, watermarked: torch.Tensor, condition: torch.Tensor,
               decoder, noiser: NoiserConfig, rng: np.random.Generator) -> torch.Tensor:
    """Reconstruction BCE after a sampled differentiable distortion."""
    from .codec import decode_logits

    noised = sample_noiser(watermarked, noiser, rng)
    return recon_loss(bits, decode_logits(decoder(noised), condition))


def cosine_similarity_matrix(anchors: torch.Tensor, others: torch.Tensor) -> torch.Tensor:
    """Row-wise cosine similarity between (N, D) anchors and (N, M, D) others."""
    a_norm = anchors.norm(dim=1)
    o_norm = others.norm(dim=2)
    if (a_norm < 1e-12).any() or (o_norm < 1e-12).any():
        raise ValueError("zero-norm message representation: cosine similarity undefined")
    dots = torch.einsum("nd,nmd->nm", anchors, others)
    return dots / (a_norm.unsqueeze(1) * o_norm)


def fragile_loss(anchors: torch.Tensor, positives: torch.Tensor,
                 negatives: torch.Tensor, temperature: float = 0.5) -> torch.Tensor:
    """Contrastive loss pulling noise-distorted decodings together and pushing
    foreign-condition decodings away.

    anchors: (N, D) clean decodings under matched conditions; positives:
    (N, D) decodings after the noiser; negatives: (N, M, D) decodings of the
    same images under the other samples' conditions (M >= 1). Similarities
    are cosine, scaled by the temperature, normalized by log-softmax with
    max-subtraction for stability.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = anchors.shape[0]
    if n < 2:
        raise ValueError("contrastive batch needs at least 2 samples")
    if negatives.dim() != 3 or negatives.shape[0] != n or negatives.shape[1] < 1:
        raise ValueError(f"negatives must be (N, M>=1, D), got {tuple(negatives.shape)}")
    pos_sim = cosine_similarity_matrix(anchors, positives.unsqueeze(1)).squeeze(1)
    neg_sim = cosine_similarity_matrix(anchors, negatives)
    scores = torch.cat([pos_sim.unsqueeze(1), neg_sim], dim=1) / temperature
    scores = scores - scores.max(dim=1, keepdim=True).values
    log_prob_pos = scores[:, 0] - torch.logsumexp(scores, dim=1)
    return -log_prob_pos.mean()


def adv_loss(cover_scores: torch.Tensor, marked_scores: torch.Tensor,
             bits, erased_logits: torch.Tensor) -> torch.Tensor:
    """Minimax value: critic gap minus decode BCE under the eraser's attack."""
    return cover_scores.mean() - marked_scores.mean() - recon_loss(bits, erased_logits)


def total_loss(recon: torch.Tensor, noise: torch.Tensor, adversarial: torch.Tensor,
               fragile: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    """Weighted sum; the adversarial value enters with a minus sign (the
    encoder/decoder maximize it)."""
    return (weights.recon * recon + weights.noise * noise
            - weights.adversarial * adversarial + weights.fragile * fragile)
