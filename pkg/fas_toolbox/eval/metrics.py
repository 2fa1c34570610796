"""Presentation-attack detection metrics.

Scores are attack probabilities: attack is the positive class and a sample is called an attack
when its score is at or above the threshold.
"""

from __future__ import annotations

from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field
from sklearn.metrics import roc_auc_score

from fas_toolbox.errors import UsageError
from fas_toolbox.eval.scores import ScoreSet

ThresholdRule = Literal["eer", "fixed"]


class EpochMetrics(BaseModel):
    epoch: int
    apcer: float
    bpcer: float
    acer: float
    auc: float
    threshold: float


class MetricReport(BaseModel):
    protocol: str = ""
    mode: Literal["best_epoch", "last_k", "single"] = "single"
    apcer: Annotated[float, Field(ge=0.0, le=1.0)]
    bpcer: Annotated[float, Field(ge=0.0, le=1.0)]
    acer: Annotated[float, Field(ge=0.0, le=1.0)]
    auc: Annotated[float, Field(ge=0.0, le=1.0)]
    threshold: float
    threshold_rule: ThresholdRule = "eer"
    k: int | None = None
    best_epoch: int | None = None
    per_epoch: list[EpochMetrics] | None = None
    stability_gap: float | None = None


def apcer_bpcer(scores: ScoreSet, threshold: float) -> tuple[float, float]:
    """(attacks scored below the threshold, lives scored at or above it), as fractions of their class."""
    scores.require_both_classes()
    values = scores.score_array
    attack = scores.attack_mask
    apcer = float(np.mean(values[attack] < threshold))
    bpcer = float(np.mean(values[~attack] >= threshold))
    return apcer, bpcer


def acer(apcer: float, bpcer: float) -> float:
    return (apcer + bpcer) / 2


def auc(scores: ScoreSet) -> float:
    """Probability that a random attack outscores a random live sample, ties counting ½."""
    scores.require_both_classes()
    return float(roc_auc_score(scores.attack_mask.astype(int), scores.score_array))


def candidate_thresholds(scores: ScoreSet) -> np.ndarray:
    """Midpoints of the sorted unique scores; the score itself when there is only one."""
    unique = np.unique(scores.score_array)
    if len(unique) == 1:
        return unique
    return (unique[:-1] + unique[1:]) / 2


def select_threshold(scores: ScoreSet) -> float:
    """Equal-error operating point: the candidate minimizing |APCER - BPCER|, lowest on ties."""
    scores.require_both_classes()
    best_threshold, best_gap = None, np.inf
    for threshold in candidate_thresholds(scores):
        apcer, bpcer = apcer_bpcer(scores, float(threshold))
        gap = abs(apcer - bpcer)
        if gap < best_gap:
            best_threshold, best_gap = float(threshold), gap
    return best_threshold


def threshold_for(scores: ScoreSet, rule: ThresholdRule = "eer", fixed_threshold: float = 0.5) -> float:
    if rule == "eer":
        return select_threshold(scores)
    if rule == "fixed":
        return fixed_threshold
    raise UsageError(f"Unknown threshold rule: {rule}")


def evaluate(
    scores: ScoreSet,
    rule: ThresholdRule = "eer",
    fixed_threshold: float = 0.5,
    epoch: int = 0,
) -> EpochMetrics:
    threshold = threshold_for(scores, rule, fixed_threshold)
    apcer, bpcer = apcer_bpcer(scores, threshold)
    return EpochMetrics(epoch=epoch, apcer=apcer, bpcer=bpcer, acer=acer(apcer, bpcer), auc=auc(scores), threshold=threshold)
