"""Distortion, perceptual, and adversarial training objectives.

The combined objective is

    total = L2 + lambda_rate * rate + lambda_perceptual * perceptual
          + lambda_adversarial * generator

All norms are normalized per element (mean squared error), so the default
weights are meaningful independent of image or feature size. The critic is a
Wasserstein one: an unbounded scalar score per image, trained with the
two-sided gradient penalty on random interpolates.
"""

import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidSpecError, ShapeError

DEFAULT_PERCEPTUAL_WEIGHT = 0.003
DEFAULT_ADVERSARIAL_WEIGHT = 0.0001
DEFAULT_GRADIENT_PENALTY = 10.0


@dataclass(frozen=True)
class LossWeights:
    lambda_rate: float = 0.0
    lambda_perceptual: float = DEFAULT_PERCEPTUAL_WEIGHT
    lambda_adversarial: float = DEFAULT_ADVERSARIAL_WEIGHT
    gradient_penalty: float = DEFAULT_GRADIENT_PENALTY

    def __post_init__(self):
        for name in ("lambda_rate", "lambda_perceptual", "lambda_adversarial",
                     "gradient_penalty"):
            if getattr(self, name) < 0:
                raise InvalidSpecError(f"{name} must be non-negative")

    def with_rate(self, lambda_rate: float) -> "LossWeights":
        return LossWeights(lambda_rate, self.lambda_perceptual,
                           self.lambda_adversarial, self.gradient_penalty)


def _batched(t: torch.Tensor) -> torch.Tensor:
    return t.unsqueeze(0) if t.ndim == 3 else t


def distortion_l2(recon: torch.Tensor, original: torch.Tensor) -> torch.Tensor:
    """Per-element mean squared error between reconstruction and original."""
    if recon.shape != original.shape:
        raise ShapeError(f"shape mismatch: {tuple(recon.shape)} vs {tuple(original.shape)}")
    return F.mse_loss(recon, original)


def perceptual_loss(recon: torch.Tensor, original: torch.Tensor,
                    features: nn.Module) -> torch.Tensor:
    """Mean squared error in the feature domain of a frozen extractor."""
    if any(p.requires_grad for p in features.parameters()):
        raise InvalidSpecError("feature extractor must be frozen (requires_grad=False)")
    return F.mse_loss(features(_batched(recon)), features(_batched(original)))


def generator_loss(recon: torch.Tensor, critic: nn.Module) -> torch.Tensor:
    """Negative mean critic score; low when the critic believes the batch."""
    return -critic(_batched(recon)).mean()


def gradient_penalty(critic: nn.Module, real: torch.Tensor, fake: torch.Tensor,
                     u: Optional[torch.Tensor] = None,
                     generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Two-sided penalty (||grad D(x_hat)|| - 1)^2 on random interpolates.

    ``u`` mixes per sample: x_hat = u * real + (1 - u) * fake with u uniform
    in [0, 1] unless given explicitly.
    """
    real = _batched(real).detach()
    fake = _batched(fake).detach()
    if u is None:
        u = torch.rand(real.shape[0], 1, 1, 1, generator=generator,
                       dtype=real.dtype, device=real.device)
    else:
        u = u.reshape(-1, 1, 1, 1).to(real.dtype)
    mixed = (u * real + (1.0 - u) * fake).requires_grad_(True)
    score = critic(mixed).sum()
    (grads,) = torch.autograd.grad(score, mixed, create_graph=True)
    norms = grads.reshape(grads.shape[0], -1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def discriminator_loss(recon: torch.Tensor, original: torch.Tensor,
                       critic: nn.Module, beta: float = DEFAULT_GRADIENT_PENALTY,
                       u: Optional[torch.Tensor] = None,
                       generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Critic objective: mean score gap plus beta times the gradient penalty.

    Image inputs are treated as data (detached); gradients flow only into the
    critic parameters.
    """
    if beta < 0:
        raise InvalidSpecError("beta must be non-negative")
    recon = _batched(recon).detach()
    original = _batched(original).detach()
    gap = critic(recon).mean() - critic(original).mean()
    if beta == 0:
        return gap
    return gap + beta * gradient_penalty(critic, original, recon, u=u, generator=generator)


def total_loss(recon: torch.Tensor, original: torch.Tensor,
               rate: Optional[torch.Tensor], weights: LossWeights,
               features: Optional[nn.Module] = None,
               critic: Optional[nn.Module] = None) -> torch.Tensor:
    """Weighted sum of all objective terms.

    Terms with zero weight are skipped, so with all lambdas zero this reduces
    exactly to ``distortion_l2``.
    """
    loss = distortion_l2(recon, original)
    if weights.lambda_rate > 0:
        if rate is None:
            raise InvalidSpecError("lambda_rate > 0 requires a rate term")
        loss = loss + weights.lambda_rate * rate
    if weights.lambda_perceptual > 0:
        if features is None:
            raise InvalidSpecError("lambda_perceptual > 0 requires a feature extractor")
        loss = loss + weights.lambda_perceptual * perceptual_loss(recon, original, features)
    if weights.lambda_adversarial > 0:
        if critic is None:
            raise InvalidSpecError("lambda_adversarial > 0 requires a critic")
        loss = loss + weights.lambda_adversarial * generator_loss(recon, critic)
    return loss


class FeatureExtractor(nn.Module):
    """Small frozen convolutional feature network.

    Stands in for a pretrained perceptual backbone: fixed random weights,
    never updated. Any frozen ``nn.Module`` mapping images to features can be
    used in its place (see ``vgg_feature_extractor``).
    """

    def __init__(self, seed: int = 0, widths: tuple[int, ...] = (16, 32, 32)):
        super().__init__()
        layers: list[nn.Module] = []
        in_ch = 3
        for i, w in enumerate(widths):
            stride = 2 if i < len(widths) - 1 else 1
            layers.append(nn.Conv2d(in_ch, w, 3, stride=stride, padding=1))
            if i < len(widths) - 1:
                layers.append(nn.ReLU())
            in_ch = w
        self.net = nn.Sequential(*layers)
        gen = torch.Generator().manual_seed(seed)
        for m in self.net.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                bound = math.sqrt(3.0 / fan_in)
                m.weight.data.uniform_(-bound, bound, generator=gen)
                m.bias.data.uniform_(-bound, bound, generator=gen)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def vgg_feature_extractor(tap_layer: int = 29) -> nn.Module:
    """Frozen torchvision VGG-16 trunk up to ``tap_layer`` (last conv by default).

    Requires torchvision with downloaded weights; the test suite never uses
    this, it exists for quality-tuned training runs.
    """
    from torchvision.models import VGG16_Weights, vgg16

    trunk = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features[: tap_layer + 1]
    trunk.requires_grad_(False)
    trunk.eval()
    return trunk


class Discriminator(nn.Module):
    """Strided convolutional critic emitting one unbounded score per image.

    Four stride-2 blocks with leaky rectifiers, then two dense layers. No
    output nonlinearity and no normalization layers.
    """

    def __init__(self, image_size: int = 128, base_channels: int = 64,
                 hidden_units: int = 1024):
        super().__init__()
        if image_size % 16 != 0:
            raise InvalidSpecError(f"image_size must be divisible by 16, got {image_size}")
        chans = [3, base_channels, 2 * base_channels, 4 * base_channels, 8 * base_channels]
        blocks: list[nn.Module] = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            blocks.append(nn.Conv2d(cin, cout, 4, stride=2, padding=1))
            blocks.append(nn.LeakyReLU(0.2))
        self.conv = nn.Sequential(*blocks)
        flat = chans[-1] * (image_size // 16) ** 2
        self.dense = nn.Sequential(
            nn.Linear(flat, hidden_units),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden_units, 1),
        )
        self.image_size = image_size

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = _batched(x)
        if x.shape[-2:] != (self.image_size, self.image_size):
            raise ShapeError(
                f"critic built for {self.image_size}x{self.image_size} inputs, "
                f"got {tuple(x.shape[-2:])}")
        return self.dense(self.conv(x).flatten(1)).squeeze(1)
