"""Pattern Conversion GAN networks.

The encoder splits an image into a content vector `z_con` and a spatial pattern map `z_pat` at
half the input resolution. The generator grows an image from `z_con` and modulates every block
with `z_pat` through spatially adaptive instance normalization; the full-resolution block reads
`z_pat` through a pixel shuffle so patterns above the half-resolution Nyquist limit survive.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from fas_toolbox.config import PCGANSettings
from fas_toolbox.errors import ShapeError, UsageError

LEAK = 0.2


class LatentPair(NamedTuple):
    z_con: torch.Tensor
    z_pat: torch.Tensor


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def high_pass(x: torch.Tensor) -> torch.Tensor:
    return x - F.avg_pool2d(x, 3, stride=1, padding=1, count_include_pad=False)


class ChannelSchedule:
    """Channel width per feature-map resolution: doubles as resolution halves, capped."""

    def __init__(self, image_size: int, base_channels: int, max_channels: int):
        self.image_size = image_size
        self.base_channels = base_channels
        self.max_channels = max_channels

    def __call__(self, resolution: int) -> int:
        return min(self.max_channels, self.base_channels * self.image_size // resolution)


class Encoder(nn.Module):
    def __init__(self, image_size: int, content_dim: int, pattern_channels: int, channels: ChannelSchedule):
        super().__init__()
        hidden = min(channels.base_channels, 32)
        self.pattern = nn.Sequential(
            nn.Conv2d(3, hidden, 4, stride=2, padding=1),
            nn.LeakyReLU(LEAK),
            nn.Conv2d(hidden, pattern_channels, 3, padding=1),
        )

        layers: list[nn.Module] = [nn.Conv2d(3, channels(image_size // 2), 4, stride=2, padding=1), nn.LeakyReLU(LEAK)]
        resolution = image_size // 2
        while resolution > 4:
            layers += [
                nn.Conv2d(channels(resolution), channels(resolution // 2), 4, stride=2, padding=1),
                nn.LeakyReLU(LEAK),
            ]
            resolution //= 2
        layers += [nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(channels(4), content_dim)]
        self.content = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> LatentPair:
        x = x * 2.0 - 1.0
        return LatentPair(self.content(x), self.pattern(high_pass(x)))


class PatternModulation(nn.Module):
    """Instance normalization whose per-pixel scale and shift are predicted from `z_pat`."""

    def __init__(self, pattern_channels: int, channels: int, resolution: int, image_size: int):
        super().__init__()
        self.resolution = resolution
        self.upscale = 2 if resolution == image_size else 1
        hidden = min(channels, 64)
        out_channels = channels * self.upscale**2
        self.shared = nn.Sequential(nn.Conv2d(pattern_channels, hidden, 3, padding=1), nn.ReLU())
        self.gamma = nn.Conv2d(hidden, out_channels, 3, padding=1)
        self.beta = nn.Conv2d(hidden, out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor, z_pat: torch.Tensor) -> torch.Tensor:
        if self.upscale == 1 and z_pat.shape[-1] != self.resolution:
            z_pat = F.adaptive_avg_pool2d(z_pat, self.resolution)
        hidden = self.shared(z_pat)
        gamma, beta = self.gamma(hidden), self.beta(hidden)
        if self.upscale > 1:
            gamma, beta = F.pixel_shuffle(gamma, self.upscale), F.pixel_shuffle(beta, self.upscale)
        return F.instance_norm(x) * (1.0 + gamma) + beta


class GeneratorBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, pattern_channels: int, resolution: int, image_size: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.norm1 = PatternModulation(pattern_channels, out_channels, resolution, image_size)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.norm2 = PatternModulation(pattern_channels, out_channels, resolution, image_size)

    def forward(self, x: torch.Tensor, z_pat: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = F.leaky_relu(self.norm1(self.conv1(x), z_pat), LEAK)
        return F.leaky_relu(self.norm2(self.conv2(x), z_pat), LEAK)


class Generator(nn.Module):
    def __init__(self, image_size: int, content_dim: int, pattern_channels: int, channels: ChannelSchedule):
        super().__init__()
        self.initial_channels = channels(4)
        self.fc = nn.Linear(content_dim, self.initial_channels * 16)
        blocks = []
        resolution = 8
        while resolution <= image_size:
            blocks.append(GeneratorBlock(channels(resolution // 2), channels(resolution), pattern_channels, resolution, image_size))
            resolution *= 2
        self.blocks = nn.ModuleList(blocks)
        self.to_rgb = nn.Conv2d(channels(image_size), 3, 1)

    def forward(self, z_con: torch.Tensor, z_pat: torch.Tensor) -> torch.Tensor:
        x = F.leaky_relu(self.fc(z_con), LEAK).view(z_con.shape[0], self.initial_channels, 4, 4)
        for block in self.blocks:
            x = block(x, z_pat)
        return (torch.tanh(self.to_rgb(x)) + 1.0) / 2.0


def _downsampling_stack(in_channels: int, start: int, channels: Callable[[int], int]) -> tuple[nn.Sequential, int]:
    layers: list[nn.Module] = []
    resolution, width = start, in_channels
    while resolution > 4:
        out = channels(resolution // 2)
        layers += [nn.Conv2d(width, out, 4, stride=2, padding=1), nn.LeakyReLU(LEAK)]
        resolution, width = resolution // 2, out
    return nn.Sequential(*layers), width


class Discriminator(nn.Module):
    """Whole-image real/fake logit."""

    def __init__(self, image_size: int, channels: ChannelSchedule):
        super().__init__()
        self.features, width = _downsampling_stack(3, image_size, channels)
        self.head = nn.Linear(width * 16, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x * 2.0 - 1.0).flatten(1)).squeeze(-1)


class PatchDiscriminator(nn.Module):
    """Co-occurrence discriminator: does a candidate crop belong with a set of reference crops?"""

    def __init__(self, patch_size: int, base_channels: int, max_channels: int):
        super().__init__()

        def widths(resolution: int) -> int:
            return min(max_channels, base_channels * patch_size // resolution)

        stack, width = _downsampling_stack(3, patch_size, widths)
        self.encoder = nn.Sequential(stack, nn.Flatten(), nn.Linear(width * 16, width), nn.LeakyReLU(LEAK))
        self.classifier = nn.Sequential(nn.Linear(2 * width, width), nn.LeakyReLU(LEAK), nn.Linear(width, 1))

    def encode(self, crops: torch.Tensor) -> torch.Tensor:
        batch, n = crops.shape[:2]
        return self.encoder(crops.flatten(0, 1) * 2.0 - 1.0).view(batch, n, -1)

    def forward(self, candidates: torch.Tensor, references: torch.Tensor) -> torch.Tensor:
        """B×n candidate crops, B×m reference crops → B×n logits."""
        candidate_features = self.encode(candidates)
        reference_features = self.encode(references).mean(dim=1, keepdim=True).expand_as(candidate_features)
        return self.classifier(torch.cat([candidate_features, reference_features], dim=-1)).squeeze(-1)


class PCGANModel(nn.Module):
    """Encoder, generator, discriminator and patch discriminator of one conversion GAN."""

    def __init__(self, settings: PCGANSettings):
        super().__init__()
        if not _is_power_of_two(settings.image_size) or settings.image_size < 8:
            raise UsageError(f"image_size must be a power of two >= 8, got {settings.image_size}")
        if not _is_power_of_two(settings.patch_size) or settings.patch_size < 8:
            raise UsageError(f"patch_size must be a power of two >= 8, got {settings.patch_size}")

        self.image_size = settings.image_size
        self.content_dim = settings.content_dim
        self.pattern_channels = settings.pattern_channels
        channels = ChannelSchedule(settings.image_size, settings.base_channels, settings.max_channels)
        self.encoder = Encoder(settings.image_size, settings.content_dim, settings.pattern_channels, channels)
        self.generator = Generator(settings.image_size, settings.content_dim, settings.pattern_channels, channels)
        self.discriminator = Discriminator(settings.image_size, channels)
        self.patch_discriminator = PatchDiscriminator(settings.patch_size, settings.base_channels, settings.max_channels)

    @property
    def pattern_side(self) -> int:
        return self.image_size // 2

    def check_image(self, x: torch.Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected a B×3×S×S batch, got shape {tuple(x.shape)}")
        height, width = x.shape[-2:]
        if height != width:
            raise ShapeError(f"input must be square, got {height}×{width}")
        if height % 2:
            raise ShapeError(f"input side must be even, got {height}")
        if height != self.image_size:
            raise ShapeError(f"input side {height} does not match the model image size {self.image_size}")

    def encode(self, x: torch.Tensor) -> LatentPair:
        self.check_image(x)
        return self.encoder(x)

    def generate(self, z_con: torch.Tensor, z_pat: torch.Tensor) -> torch.Tensor:
        expected_pat = (self.pattern_channels, self.pattern_side, self.pattern_side)
        if z_con.ndim != 2 or z_con.shape[1] != self.content_dim:
            raise ShapeError(f"z_con must be B×{self.content_dim}, got {tuple(z_con.shape)}")
        if z_pat.ndim != 4 or tuple(z_pat.shape[1:]) != expected_pat:
            raise ShapeError(f"z_pat must be B×{'×'.join(map(str, expected_pat))}, got {tuple(z_pat.shape)}")
        if z_con.shape[0] != z_pat.shape[0]:
            raise ShapeError(f"latent batch sizes differ: {z_con.shape[0]} vs {z_pat.shape[0]}")
        return self.generator(z_con, z_pat)

    def reconstruct(self, x: torch.Tensor) -> torch.Tensor:
        return self.generate(*self.encode(x))

    def swap(self, content: torch.Tensor, pattern: torch.Tensor) -> torch.Tensor:
        """Image with the content of `content` and the artifact pattern of `pattern`."""
        z_con, _ = self.encode(content)
        _, z_pat = self.encode(pattern)
        return self.generate(z_con, z_pat)

    def generator_parameters(self) -> list[nn.Parameter]:
        return [*self.encoder.parameters(), *self.generator.parameters()]

    def discriminator_parameters(self) -> list[nn.Parameter]:
        return [*self.discriminator.parameters(), *self.patch_discriminator.parameters()]
