"""Leave-one-out cross-domain protocols and per-epoch score aggregation."""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from fas_toolbox.errors import ProtocolError, UsageError
from fas_toolbox.eval.metrics import EpochMetrics, MetricReport, ThresholdRule, acer, evaluate
from fas_toolbox.eval.scores import read_scores
from fas_toolbox.log import logger

Averaging = Literal["best_epoch", "last_k"]

DATASETS = {
    "omic": {"O": "OULU-NPU", "M": "MSU-MFSD", "I": "Idiap Replay-Attack", "C": "CASIA-FASD"},
    "csw": {"C": "CASIA-SURF CeFA", "S": "CASIA-SURF", "W": "WMCA"},
}

PROTOCOLS = {
    "OCI→M": ("omic", {"O", "C", "I"}, "M"),
    "OMI→C": ("omic", {"O", "M", "I"}, "C"),
    "OCM→I": ("omic", {"O", "C", "M"}, "I"),
    "ICM→O": ("omic", {"I", "C", "M"}, "O"),
    "CS→W": ("csw", {"C", "S"}, "W"),
    "SW→C": ("csw", {"S", "W"}, "C"),
    "CW→S": ("csw", {"C", "W"}, "S"),
}


def score_file_name(epoch: int) -> str:
    return f"epoch_{epoch}.scores"


class ProtocolSpec(BaseModel):
    name: str
    train_domains: Annotated[frozenset[str], Field(min_length=1)]
    test_domain: str
    epochs: Annotated[int, Field(ge=1)] = 1
    averaging: Averaging = "last_k"
    k: Annotated[int, Field(ge=1)] = 10
    benchmark: str | None = Field(default=None, description="Catalogue family the domain letters refer to")

    @model_validator(mode="after")
    def _check(self) -> ProtocolSpec:
        if self.test_domain in self.train_domains:
            raise ValueError(f"test domain {self.test_domain} is also a training domain")
        if self.k > self.epochs:
            raise ValueError(f"k={self.k} exceeds the {self.epochs} available epochs")
        return self

    @classmethod
    def parse(cls, name: str, epochs: int = 1, averaging: Averaging = "last_k", k: int = 10) -> ProtocolSpec:
        """Build a spec from a name such as "OCI→M", "AB->C" or "A,B→C" (comma for multi-letter ids)."""
        normalized = name.replace("->", "→").replace(" ", "")
        if normalized.count("→") != 1:
            raise UsageError(f"Protocol name must look like 'AB→C', got {name!r}")
        left, test = normalized.split("→")
        train = {domain for domain in left.split(",") if domain} if "," in left else set(left)
        if not train or not test:
            raise UsageError(f"Protocol name must name training and test domains, got {name!r}")
        benchmark = PROTOCOLS[normalized][0] if normalized in PROTOCOLS else None
        try:
            return cls(
                name=normalized,
                train_domains=frozenset(train),
                test_domain=test,
                epochs=epochs,
                averaging=averaging,
                k=k,
                benchmark=benchmark,
            )
        except ValueError as e:
            raise UsageError(f"Invalid protocol {name!r}: {e}") from e

    @property
    def dataset_names(self) -> dict[str, str]:
        """Full dataset names of the domain letters for catalogue protocols."""
        if self.benchmark is None:
            return {}
        names = DATASETS[self.benchmark]
        return {domain: names[domain] for domain in sorted(self.train_domains | {self.test_domain})}


def _mean_metrics(series: Sequence[EpochMetrics]) -> EpochMetrics:
    mean_apcer = float(np.mean([item.apcer for item in series]))
    mean_bpcer = float(np.mean([item.bpcer for item in series]))
    return EpochMetrics(
        epoch=series[-1].epoch,
        apcer=mean_apcer,
        bpcer=mean_bpcer,
        acer=acer(mean_apcer, mean_bpcer),
        auc=float(np.mean([item.auc for item in series])),
        threshold=float(np.mean([item.threshold for item in series])),
    )


def best_epoch(series: Sequence[EpochMetrics]) -> EpochMetrics:
    """Minimum-ACER epoch, earliest on ties."""
    if not series:
        raise UsageError("empty metric series")
    return min(series, key=lambda item: (item.acer, item.epoch))


def last_k_average(series: Sequence[EpochMetrics], k: int) -> tuple[EpochMetrics, float]:
    """Means over the final k epochs and the stability gap (last-k ACER minus best-epoch ACER)."""
    if k < 1 or k > len(series):
        raise UsageError(f"k must lie in [1, {len(series)}], got {k}")
    mean = _mean_metrics(series[-k:])
    return mean, mean.acer - best_epoch(series).acer


def epoch_metrics(
    spec: ProtocolSpec,
    score_dir: str | Path,
    rule: ThresholdRule = "eer",
    fixed_threshold: float = 0.5,
    workers: int = 4,
) -> list[EpochMetrics]:
    """Test-domain metrics of every epoch 1..spec.epochs, in epoch order."""
    directory = Path(score_dir)
    paths = [directory / score_file_name(epoch) for epoch in range(1, spec.epochs + 1)]
    for epoch, path in enumerate(paths, start=1):
        if not path.is_file():
            raise ProtocolError(f"missing score file for epoch {epoch}: {path.as_posix()}", {"epoch": epoch})

    def compute(epoch: int) -> EpochMetrics:
        scores = read_scores(paths[epoch - 1]).for_domain(spec.test_domain).sorted_by_path()
        if len(scores) == 0:
            raise ProtocolError(f"epoch {epoch} has no scores for test domain {spec.test_domain}", {"epoch": epoch})
        return evaluate(scores, rule, fixed_threshold, epoch=epoch)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        return list(pool.map(compute, range(1, spec.epochs + 1)))


def summarize(
    spec: ProtocolSpec,
    series: Sequence[EpochMetrics],
    mode: Averaging,
    rule: ThresholdRule = "eer",
) -> MetricReport:
    best = best_epoch(series)
    if mode == "best_epoch":
        chosen, gap, k = best, None, None
    else:
        chosen, gap = last_k_average(series, spec.k)
        k = spec.k
    return MetricReport(
        protocol=spec.name,
        mode=mode,
        apcer=chosen.apcer,
        bpcer=chosen.bpcer,
        acer=chosen.acer,
        auc=chosen.auc,
        threshold=chosen.threshold,
        threshold_rule=rule,
        k=k,
        best_epoch=best.epoch,
        per_epoch=list(series),
        stability_gap=gap,
    )


def run_protocol(
    spec: ProtocolSpec,
    score_dir: str | Path,
    rule: ThresholdRule = "eer",
    fixed_threshold: float = 0.5,
) -> MetricReport:
    """The report in the protocol's own averaging mode."""
    series = epoch_metrics(spec, score_dir, rule, fixed_threshold)
    return summarize(spec, series, spec.averaging, rule)


def run_protocol_reports(
    spec: ProtocolSpec,
    score_dir: str | Path,
    rule: ThresholdRule = "eer",
    fixed_threshold: float = 0.5,
) -> list[MetricReport]:
    """Best-epoch and last-k reports from one pass over the score files."""
    series = epoch_metrics(spec, score_dir, rule, fixed_threshold)
    reports = [summarize(spec, series, "best_epoch", rule), summarize(spec, series, "last_k", rule)]
    logger.info(
        f"{spec.name}: best epoch {reports[0].best_epoch} ACER {reports[0].acer:.4f}, "
        f"last-{spec.k} ACER {reports[1].acer:.4f} (gap {reports[1].stability_gap:.4f})"
    )
    return reports
