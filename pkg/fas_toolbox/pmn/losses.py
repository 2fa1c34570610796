"""Detector objectives: prompt-anchored CLIP loss, face and patch cross-entropies, center loss."""

from __future__ import annotations

from collections.abc import Iterable

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict
from torch import nn

from fas_toolbox.errors import NumericalError, ShapeError, UsageError
from fas_toolbox.log import logger
from fas_toolbox.pmn.model import ClassCenters, PMNHeads


class PMNLosses(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    clip: torch.Tensor
    face: torch.Tensor
    patch: torch.Tensor
    center: torch.Tensor
    l2: torch.Tensor


def guard_finite(value: torch.Tensor, name: str) -> torch.Tensor:
    if not bool(torch.isfinite(value).all()):
        logger.warning(f"Non-finite {name}")
        raise NumericalError(f"{name} is not finite", {"term": name})
    return value


def check_labels(labels: torch.Tensor, batch_size: int) -> torch.Tensor:
    if labels.ndim != 1 or labels.shape[0] != batch_size:
        raise ShapeError(f"expected {batch_size} labels, got shape {tuple(labels.shape)}")
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) > 1):
        raise UsageError(f"labels must be 0 (live) or 1 (attack), got {sorted(set(labels.tolist()))}")
    return labels.long()


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor, name: str = "cross-entropy") -> torch.Tensor:
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"expected B×2 logits, got shape {tuple(logits.shape)}")
    return guard_finite(F.cross_entropy(logits, check_labels(labels, logits.shape[0])), name)


def clip_logits(embeddings: torch.Tensor, prompt_means: torch.Tensor, logit_scale: torch.Tensor) -> torch.Tensor:
    """exp(logit_scale) · cosine similarity of each image embedding with the two class prompt means."""
    guard_finite(embeddings, "image embedding")
    return logit_scale.exp() * F.normalize(embeddings, dim=-1) @ prompt_means.t()


def clip_loss_from_embeddings(
    embeddings: torch.Tensor,
    labels: torch.Tensor,
    prompt_means: torch.Tensor,
    logit_scale: torch.Tensor,
) -> torch.Tensor:
    return cross_entropy(clip_logits(embeddings, prompt_means, logit_scale), labels, "CLIP loss")


def clip_loss(images: torch.Tensor, labels: torch.Tensor, prompt_means: torch.Tensor, backbone) -> torch.Tensor:
    return clip_loss_from_embeddings(backbone.encode_image(images), labels, prompt_means, backbone.logit_scale)


def check_input(images: torch.Tensor, backbone) -> None:
    size = backbone.input_size
    if images.ndim != 4 or images.shape[1] != 3 or tuple(images.shape[-2:]) != (size, size):
        raise ShapeError(f"expected a B×3×{size}×{size} batch, got shape {tuple(images.shape)}")


def face_loss(images: torch.Tensor, labels: torch.Tensor, backbone, heads: PMNHeads) -> torch.Tensor:
    """Cross-entropy of the face head on full face crops."""
    check_input(images, backbone)
    return cross_entropy(heads.face(heads.features(backbone.encode_image(images))), labels, "face loss")


def patch_loss(patches: torch.Tensor, labels: torch.Tensor, backbone, heads: PMNHeads) -> torch.Tensor:
    """Cross-entropy of the patch head on resized patches; shares the backbone and F with the face loss."""
    check_input(patches, backbone)
    return cross_entropy(heads.patch(heads.features(backbone.encode_image(patches))), labels, "patch loss")


def center_loss(features: torch.Tensor, labels: torch.Tensor, centers: ClassCenters) -> torch.Tensor:
    """Mean over the batch of ½‖f_i - c_{y_i}‖²."""
    labels = check_labels(labels, features.shape[0])
    if features.shape[1] != centers.centers.shape[1]:
        raise ShapeError(f"feature dim {features.shape[1]} does not match center dim {centers.centers.shape[1]}")
    gaps = features - centers.centers.to(features.dtype)[labels]
    return 0.5 * gaps.pow(2).sum(dim=1).mean()


@torch.no_grad()
def update_centers(centers: ClassCenters, features: torch.Tensor, labels: torch.Tensor) -> ClassCenters:
    """c_y ← c_y - rate · mean over class-y samples of (c_y - f_i); classes absent from the batch keep their center."""
    labels = check_labels(labels, features.shape[0])
    updated = centers.centers.clone()
    for label in (0, 1):
        mask = labels == label
        if bool(mask.any()):
            delta = (updated[label] - features[mask].to(updated.dtype)).mean(dim=0)
            updated[label] = updated[label] - centers.update_rate * delta
    return centers.with_centers(updated)


def l2_penalty(parameters: Iterable[nn.Parameter]) -> torch.Tensor:
    """Squared L2 norm of the trainable weight tensors; 1-D gains and biases are excluded."""
    terms = [parameter.pow(2).sum() for parameter in parameters if parameter.requires_grad and parameter.ndim > 1]
    return torch.stack(terms).sum() if terms else torch.zeros(())


def total_pmn_loss(
    components: PMNLosses,
    alpha: float = 0.2,
    beta: float = 1e-6,
    parameters: Iterable[nn.Parameter] | None = None,
) -> torch.Tensor:
    """L_clip + L_face + L_patch + α·L_center + β·l2; `parameters` recomputes the l2 term."""
    if alpha < 0 or beta < 0:
        raise UsageError(f"alpha and beta must be non-negative, got {alpha}, {beta}")
    l2 = l2_penalty(parameters) if parameters is not None else components.l2
    return components.clip + components.face + components.patch + alpha * components.center + beta * l2
