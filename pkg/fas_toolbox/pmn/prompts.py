from __future__ import annotations

from typing import Annotated

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, field_validator

from fas_toolbox.errors import NumericalError

PROMPTS_PER_CLASS = 6

LIVE_PROMPTS = (
    "This is an example of a real face",
    "This is a bonafide face",
    "This is a real face",
    "This is how a real face looks like",
    "a photo of a real face",
    "This is not a spoof face",
)

ATTACK_PROMPTS = (
    "This is an example of a spoof face",
    "This is an example of an attack face",
    "This is not a real face",
    "This is how a spoof face looks like",
    "a photo of a spoof face",
    "a printout shown to be a spoof face",
)


class PromptBank(BaseModel):
    """Six description sentences per class."""

    model_config = ConfigDict(frozen=True)

    live_prompts: Annotated[
        tuple[str, ...], Field(min_length=PROMPTS_PER_CLASS, max_length=PROMPTS_PER_CLASS)
    ] = LIVE_PROMPTS
    attack_prompts: Annotated[
        tuple[str, ...], Field(min_length=PROMPTS_PER_CLASS, max_length=PROMPTS_PER_CLASS)
    ] = ATTACK_PROMPTS

    @field_validator("live_prompts", "attack_prompts")
    @classmethod
    def _non_empty(cls, prompts: tuple[str, ...]) -> tuple[str, ...]:
        for prompt in prompts:
            if not prompt.strip():
                raise ValueError("prompts must be non-empty strings")
        return prompts


@torch.no_grad()
def embed_prompts(bank: PromptBank, backbone) -> torch.Tensor:
    """2×d matrix [live mean; attack mean] of unit-norm class text embeddings.

    Each prompt embedding is normalized, the six are averaged and the mean is normalized again.
    """
    means = []
    for prompts in (bank.live_prompts, bank.attack_prompts):
        embeddings = backbone.encode_text(backbone.tokenize(list(prompts)))
        if not bool(torch.isfinite(embeddings).all()):
            raise NumericalError("text encoder produced a non-finite prompt embedding")
        means.append(F.normalize(F.normalize(embeddings, dim=-1).mean(dim=0), dim=-1))
    return torch.stack(means)
