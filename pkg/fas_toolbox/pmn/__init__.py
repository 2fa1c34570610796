"""Patch-based multi-task detector: prompt-anchored vision-language backbone with face and patch heads."""

from fas_toolbox.pmn.backbone import Backbone, OpenClipBackbone, TinyDualEncoder, build_backbone
from fas_toolbox.pmn.losses import (
    PMNLosses,
    center_loss,
    clip_loss,
    face_loss,
    l2_penalty,
    patch_loss,
    total_pmn_loss,
    update_centers,
)
from fas_toolbox.pmn.model import ClassCenters, PMNHeads, PMNModel
from fas_toolbox.pmn.prompts import PromptBank, embed_prompts
from fas_toolbox.pmn.trainer import PMNLossRecord, PMNTrainState, load_pmn, pmn_train_step, score, train_pmn

__all__ = [
    "Backbone",
    "ClassCenters",
    "OpenClipBackbone",
    "PMNHeads",
    "PMNLossRecord",
    "PMNLosses",
    "PMNModel",
    "PMNTrainState",
    "PromptBank",
    "TinyDualEncoder",
    "build_backbone",
    "center_loss",
    "clip_loss",
    "embed_prompts",
    "face_loss",
    "l2_penalty",
    "load_pmn",
    "patch_loss",
    "pmn_train_step",
    "score",
    "total_pmn_loss",
    "train_pmn",
    "update_centers",
]
