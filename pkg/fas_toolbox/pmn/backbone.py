"""Vision-language backbones.

Any backbone exposes `encode_image`, `encode_text`, `tokenize`, `embed_dim`, `input_size`, a
log-space `logit_scale` parameter and `image_parameters()` (the tower that is fine-tuned).
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from typing import Protocol, runtime_checkable

import torch
import torch.nn.functional as F
from torch import nn

from fas_toolbox.config import PMNSettings
from fas_toolbox.errors import UsageError
from fas_toolbox.log import logger


@runtime_checkable
class Backbone(Protocol):
    embed_dim: int
    input_size: int
    logit_scale: nn.Parameter

    def encode_image(self, images: torch.Tensor) -> torch.Tensor: ...

    def encode_text(self, tokens: torch.Tensor) -> torch.Tensor: ...

    def tokenize(self, texts: Sequence[str]) -> torch.Tensor: ...

    def image_parameters(self) -> Iterator[nn.Parameter]: ...


class TinyDualEncoder(nn.Module):
    """Small random-init image/text encoder pair with the backbone interface."""

    context_length = 64

    def __init__(self, embed_dim: int = 64, input_size: int = 64, logit_scale_init: float = math.log(1 / 0.07)):
        super().__init__()
        self.embed_dim = embed_dim
        self.input_size = input_size
        self.visual = nn.Sequential(
            nn.Conv2d(3, 16, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(64, 64, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(64, embed_dim),
        )
        self.token_embedding = nn.Embedding(257, embed_dim, padding_idx=0)
        self.text_projection = nn.Linear(embed_dim, embed_dim)
        self.logit_scale = nn.Parameter(torch.tensor(logit_scale_init))

    def tokenize(self, texts: Sequence[str]) -> torch.Tensor:
        """UTF-8 bytes shifted by one so 0 stays the padding id."""
        tokens = torch.zeros(len(texts), self.context_length, dtype=torch.long)
        for row, text in enumerate(texts):
            encoded = [byte + 1 for byte in text.encode("utf-8")[: self.context_length]]
            tokens[row, : len(encoded)] = torch.tensor(encoded, dtype=torch.long)
        return tokens

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return self.visual(images * 2.0 - 1.0)

    def encode_text(self, tokens: torch.Tensor) -> torch.Tensor:
        mask = (tokens != 0).unsqueeze(-1).float()
        pooled = (self.token_embedding(tokens) * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return self.text_projection(pooled)

    def image_parameters(self) -> Iterator[nn.Parameter]:
        return self.visual.parameters()


class OpenClipBackbone(nn.Module):
    """Pretrained CLIP towers loaded through open_clip (`pip install fas-toolbox[clip]`)."""

    def __init__(self, model_name: str = "ViT-B-16", pretrained: str = "openai", input_size: int = 224):
        super().__init__()
        try:
            import open_clip
        except ImportError as e:
            raise UsageError("The open_clip backbone needs the optional dependency: pip install 'fas-toolbox[clip]'") from e

        logger.info(f"Loading open_clip {model_name} ({pretrained})")
        self.model, _, _ = open_clip.create_model_and_transforms(model_name, pretrained=pretrained)
        self.tokenizer = open_clip.get_tokenizer(model_name)
        self.embed_dim = int(self.model.visual.output_dim)
        self.input_size = input_size
        image_size = self.model.visual.image_size
        self.clip_size = tuple(image_size) if isinstance(image_size, (tuple, list)) else (image_size, image_size)
        self.register_buffer("mean", torch.tensor(open_clip.OPENAI_DATASET_MEAN).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("std", torch.tensor(open_clip.OPENAI_DATASET_STD).view(1, 3, 1, 1), persistent=False)

    @property
    def logit_scale(self) -> nn.Parameter:
        return self.model.logit_scale

    def tokenize(self, texts: Sequence[str]) -> torch.Tensor:
        return self.tokenizer(list(texts))

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        if tuple(images.shape[-2:]) != self.clip_size:
            images = F.interpolate(images, size=self.clip_size, mode="bilinear", align_corners=False)
        return self.model.encode_image((images - self.mean) / self.std)

    def encode_text(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.model.encode_text(tokens)

    def image_parameters(self) -> Iterator[nn.Parameter]:
        return self.model.visual.parameters()


def build_backbone(settings: PMNSettings) -> nn.Module:
    if settings.backbone == "tiny":
        return TinyDualEncoder(settings.embed_dim, settings.input_size, settings.logit_scale_init)
    return OpenClipBackbone(settings.clip_model, settings.clip_pretrained, settings.input_size)
