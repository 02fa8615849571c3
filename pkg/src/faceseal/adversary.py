"""Adversarial training components: the critic scoring cover vs watermarked
images and the eraser that attacks the hidden message.

Both are updated in a separate optimizer step from the encoder/decoder; the
parameter sets never mix. The critic's weights are clipped after each update
for stability (no gradient penalty is used).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

CRITIC_WEIGHT_CLIP = 0.1


class Critic(nn.Module):
    """Three 3x3 convolutions with downsampling, pooled to a scalar score."""

    def __init__(self, width: int = 16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * width, 1, 3, stride=2, padding=1),
        )

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return self.net(image).mean(dim=(1, 2, 3))


def clip_critic_weights(critic: Critic, bound: float = CRITIC_WEIGHT_CLIP) -> None:
    with torch.no_grad():
        for p in critic.parameters():
            p.clamp_(-bound, bound)


class Eraser(nn.Module):
    """Two 3x3 convolutions attacking the watermark, image to image.

    Parameterized residually with a zero-initialized output convolution, so
    the untrained eraser is the identity and the attack grows from nothing.
    """

    def __init__(self, width: int = 16):
        super().__init__()
        self.conv1 = nn.Conv2d(3, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, 3, 3, padding=1)
        nn.init.zeros_(self.conv2.weight)
        nn.init.zeros_(self.conv2.bias)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        return image + self.conv2(F.leaky_relu(self.conv1(image), 0.2))
