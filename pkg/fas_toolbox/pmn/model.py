from __future__ import annotations

from dataclasses import dataclass, replace

import torch
from torch import nn

from fas_toolbox.config import PMNSettings
from fas_toolbox.errors import UsageError
from fas_toolbox.pmn.backbone import build_backbone

N_CLASSES = 2


class PMNHeads(nn.Module):
    """Shared feature MLP F with separate face (M1) and patch (M2) classifiers."""

    def __init__(self, embed_dim: int, feature_dim: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Linear(embed_dim, feature_dim),
            nn.ReLU(),
            nn.Linear(feature_dim, feature_dim),
        )
        self.face = nn.Linear(feature_dim, N_CLASSES)
        self.patch = nn.Linear(feature_dim, N_CLASSES)


@dataclass(frozen=True)
class ClassCenters:
    """One feature center per class (live, attack), shared by every domain."""

    centers: torch.Tensor
    update_rate: float = 0.5

    def __post_init__(self) -> None:
        if self.centers.ndim != 2 or self.centers.shape[0] != N_CLASSES:
            raise UsageError(f"centers must be {N_CLASSES}×d, got {tuple(self.centers.shape)}")
        if not 0.0 <= self.update_rate <= 1.0:
            raise UsageError(f"update_rate must lie in [0, 1], got {self.update_rate}")

    @classmethod
    def zeros(cls, feature_dim: int, update_rate: float = 0.5) -> ClassCenters:
        return cls(torch.zeros(N_CLASSES, feature_dim), update_rate)

    def with_centers(self, centers: torch.Tensor) -> ClassCenters:
        return replace(self, centers=centers)


class PMNModel(nn.Module):
    """Backbone plus heads; the prompt class means are a fixed buffer computed once per run."""

    def __init__(self, settings: PMNSettings, backbone: nn.Module | None = None):
        super().__init__()
        self.backbone = backbone if backbone is not None else build_backbone(settings)
        self.heads = PMNHeads(self.backbone.embed_dim, settings.feature_dim)
        self.register_buffer("prompt_means", torch.zeros(N_CLASSES, self.backbone.embed_dim))

    @property
    def input_size(self) -> int:
        return self.backbone.input_size

    def freeze_text_encoder(self) -> None:
        """Only the image tower, the logit scale and the heads keep training."""
        trainable = {id(parameter) for parameter in self.backbone.image_parameters()}
        trainable.add(id(self.backbone.logit_scale))
        for parameter in self.backbone.parameters():
            parameter.requires_grad_(id(parameter) in trainable)

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [parameter for parameter in self.parameters() if parameter.requires_grad]
