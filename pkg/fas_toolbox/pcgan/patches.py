from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from fas_toolbox.config import PCGANSettings
from fas_toolbox.errors import ShapeError, UsageError


@dataclass(frozen=True)
class PatchSampler:
    """Random square crops for the patch discriminator.

    Crop sides are drawn uniformly in [min_frac, max_frac] of the image side, every crop is
    resized to `patch_size`.
    """

    n_crops: int = 8
    n_reference_crops: int = 4
    min_frac: float = 0.125
    max_frac: float = 0.25
    patch_size: int = 64

    def __post_init__(self) -> None:
        if not 0 < self.min_frac <= self.max_frac <= 1:
            raise UsageError(f"crop fractions must satisfy 0 < min <= max <= 1, got ({self.min_frac}, {self.max_frac})")

    @classmethod
    def from_settings(cls, settings: PCGANSettings) -> PatchSampler:
        return cls(
            n_crops=settings.n_crops,
            n_reference_crops=settings.n_reference_crops,
            min_frac=settings.crop_min_frac,
            max_frac=settings.crop_max_frac,
            patch_size=settings.patch_size,
        )

    def sample(self, images: torch.Tensor, n: int, rng: torch.Generator) -> torch.Tensor:
        """B×3×S×S images → B×n×3×p×p crops."""
        if images.ndim != 4 or images.shape[-1] != images.shape[-2]:
            raise ShapeError(f"expected a B×3×S×S batch, got shape {tuple(images.shape)}")
        batch, channels, side, _ = images.shape
        low = max(int(round(self.min_frac * side)), 1)
        high = max(int(round(self.max_frac * side)), low)

        crops = []
        for b in range(batch):
            for _ in range(n):
                crop_side = int(torch.randint(low, high + 1, (1,), generator=rng))
                top = int(torch.randint(0, side - crop_side + 1, (1,), generator=rng))
                left = int(torch.randint(0, side - crop_side + 1, (1,), generator=rng))
                crop = images[b : b + 1, :, top : top + crop_side, left : left + crop_side]
                if crop_side != self.patch_size:
                    crop = F.interpolate(crop, size=(self.patch_size, self.patch_size), mode="bilinear", align_corners=False)
                crops.append(crop)
        return torch.cat(crops).view(batch, n, channels, self.patch_size, self.patch_size)

    def candidates(self, images: torch.Tensor, rng: torch.Generator) -> torch.Tensor:
        return self.sample(images, self.n_crops, rng)

    def references(self, images: torch.Tensor, rng: torch.Generator) -> torch.Tensor:
        return self.sample(images, self.n_reference_crops, rng)
