"""Per-sample detector scores and their line-delimited file format.

One record per line, tab-separated: `path  score  label  domain`. The score is the attack
probability written with 17 significant digits so it reads back bit-identical. Lines starting
with `#` are provenance comments.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field, model_validator

from fas_toolbox.datapipe.types import Label
from fas_toolbox.errors import MetricError, OutputError, ProtocolError


class ScoreSet(BaseModel):
    scores: list[float] = Field(default_factory=list, description="Attack probability per sample")
    labels: list[Label] = Field(default_factory=list)
    paths: list[str] = Field(default_factory=list)
    domains: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_lengths(self) -> ScoreSet:
        n = len(self.scores)
        if len(self.labels) != n:
            raise ValueError(f"{n} scores but {len(self.labels)} labels")
        if self.paths and len(self.paths) != n:
            raise ValueError(f"{n} scores but {len(self.paths)} paths")
        if self.domains and len(self.domains) != n:
            raise ValueError(f"{n} scores but {len(self.domains)} domains")
        return self

    @classmethod
    def from_arrays(cls, scores, labels) -> ScoreSet:
        """Labels as 0/1 (1 = attack) or Label values."""
        return cls(
            scores=[float(score) for score in scores],
            labels=[label if isinstance(label, Label) else Label.from_index(int(label)) for label in labels],
        )

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def score_array(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=np.float64)

    @property
    def attack_mask(self) -> np.ndarray:
        return np.asarray([label is Label.attack for label in self.labels], dtype=bool)

    def require_both_classes(self) -> None:
        n_attack = int(self.attack_mask.sum())
        if n_attack == 0 or n_attack == len(self):
            raise MetricError(
                f"metrics need both classes, got {n_attack} attack and {len(self) - n_attack} live samples",
                {"attack": n_attack, "live": len(self) - n_attack},
            )

    def for_domain(self, domain: str) -> ScoreSet:
        keep = [i for i, value in enumerate(self.domains) if value == domain]
        return ScoreSet(
            scores=[self.scores[i] for i in keep],
            labels=[self.labels[i] for i in keep],
            paths=[self.paths[i] for i in keep] if self.paths else [],
            domains=[self.domains[i] for i in keep],
        )

    def sorted_by_path(self) -> ScoreSet:
        order = sorted(range(len(self)), key=lambda i: (self.paths[i] if self.paths else "", self.scores[i]))
        return ScoreSet(
            scores=[self.scores[i] for i in order],
            labels=[self.labels[i] for i in order],
            paths=[self.paths[i] for i in order] if self.paths else [],
            domains=[self.domains[i] for i in order] if self.domains else [],
        )


def write_scores(scores: ScoreSet, path: str | Path, header: str | None = None) -> Path:
    score_path = Path(path)
    lines = [header] if header else []
    for i, score in enumerate(scores.scores):
        sample_path = scores.paths[i] if scores.paths else f"sample_{i:06d}"
        domain = scores.domains[i] if scores.domains else "-"
        lines.append(f"{sample_path}\t{score:.17g}\t{scores.labels[i].value}\t{domain}")
    try:
        score_path.parent.mkdir(parents=True, exist_ok=True)
        score_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Failed to write scores {score_path.as_posix()}: {e}") from e
    return score_path


def read_scores(path: str | Path) -> ScoreSet:
    score_path = Path(path)
    try:
        lines = score_path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ProtocolError(f"Failed to read scores {score_path.as_posix()}: {e}") from e

    scores, labels, paths, domains = [], [], [], []
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ProtocolError(f"{score_path.name} line {number}: expected 4 tab-separated fields, got {len(fields)}")
        sample_path, score, label, domain = fields
        try:
            value = float(score)
            parsed = Label(label)
        except ValueError as e:
            raise ProtocolError(f"{score_path.name} line {number}: {e}") from None
        if not 0.0 <= value <= 1.0:
            raise ProtocolError(f"{score_path.name} line {number}: score {value} outside [0, 1]")
        scores.append(value)
        labels.append(parsed)
        paths.append(sample_path)
        domains.append(domain)
    return ScoreSet(scores=scores, labels=labels, paths=paths, domains=domains)
