from __future__ import annotations

from collections import Counter
from enum import Enum
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

BBox = tuple[int, int, int, int]


class Label(str, Enum):
    live = "live"
    attack = "attack"

    @property
    def index(self) -> int:
        return 0 if self is Label.live else 1

    @classmethod
    def from_index(cls, index: int) -> Label:
        return cls.live if index == 0 else cls.attack


class Provenance(str, Enum):
    original = "original"
    synthesized = "synthesized"


class FaceSample(BaseModel):
    """One image record. `image` is H×W×3 float32 in [0, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    image: np.ndarray
    label: Label
    domain_id: str
    attack_type: str | None = None
    identity_id: str | None = None
    provenance: Provenance = Provenance.original
    bbox: BBox | None = None
    path: str | None = None

    @field_validator("image")
    @classmethod
    def _check_image(cls, image: np.ndarray) -> np.ndarray:
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"image must be H×W×3, got shape {image.shape}")
        if not np.isfinite(image).all() or image.min() < 0.0 or image.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        return image

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]


class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: str
    label: Label
    domain_id: str
    attack_type: str | None = None
    identity_id: str | None = None
    provenance: Provenance = Provenance.original
    bbox: BBox | None = None


class DatasetManifest(BaseModel):
    name: str
    root: Path
    entries: list[ManifestEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_unique_paths(self) -> DatasetManifest:
        seen: set[str] = set()
        for entry in self.entries:
            if entry.path in seen:
                raise ValueError(f"duplicate manifest path: {entry.path}")
            seen.add(entry.path)
        return self

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def label_histogram(self) -> dict[str, int]:
        counts = Counter(entry.label.value for entry in self.entries)
        return {label.value: counts.get(label.value, 0) for label in Label}

    @property
    def domain_histogram(self) -> dict[str, int]:
        return dict(sorted(Counter(entry.domain_id for entry in self.entries).items()))

    @property
    def metadata(self) -> dict[str, object]:
        return {
            "name": self.name,
            "entries": len(self.entries),
            "labels": self.label_histogram,
            "domains": self.domain_histogram,
        }

    def resolve(self, entry: ManifestEntry) -> Path:
        path = Path(entry.path)
        return path if path.is_absolute() else self.root / path

    def filter(
        self,
        *,
        domains: set[str] | None = None,
        label: Label | None = None,
        provenance: Provenance | None = None,
        name: str | None = None,
    ) -> DatasetManifest:
        entries = [
            entry
            for entry in self.entries
            if (domains is None or entry.domain_id in domains)
            and (label is None or entry.label is label)
            and (provenance is None or entry.provenance is provenance)
        ]
        return DatasetManifest(name=name or self.name, root=self.root, entries=entries)


class CropSpec(BaseModel):
    """Patch extraction strategy; scales are side-length fractions of min(H, W)."""

    model_config = ConfigDict(frozen=True)

    strategy: Literal["random", "center", "left_up"] = "random"
    scale_min: Annotated[float, Field(gt=0.0, le=1.0)] = 0.2
    scale_max: Annotated[float, Field(gt=0.0, le=1.0)] = 1.0
    output_size: Annotated[int, Field(ge=8)] = 224

    @model_validator(mode="after")
    def _check_scale_order(self) -> CropSpec:
        if self.scale_min > self.scale_max:
            raise ValueError(f"scale_min {self.scale_min} > scale_max {self.scale_max}")
        return self

    @classmethod
    def from_label(cls, label: str, scale_min: float = 0.2, scale_max: float = 1.0, output_size: int = 224) -> CropSpec:
        """Build a spec from the ablation abbreviations RC, CC and LC."""
        strategies = {"RC": "random", "CC": "center", "LC": "left_up"}
        try:
            strategy = strategies[label.upper()]
        except KeyError:
            raise ValueError(f"Unknown crop label {label!r}, expected one of {sorted(strategies)}") from None
        return cls(strategy=strategy, scale_min=scale_min, scale_max=scale_max, output_size=output_size)
