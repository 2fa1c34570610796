from __future__ import annotations

import os
from pathlib import Path

from pydantic import ValidationError

from fas_toolbox.datapipe.types import DatasetManifest, Label, ManifestEntry
from fas_toolbox.errors import MergeError


def _rebase(entry: ManifestEntry, source: DatasetManifest, target_root: Path) -> ManifestEntry:
    if Path(entry.path).is_absolute() or source.root == target_root:
        return entry
    absolute = source.resolve(entry)
    return entry.model_copy(update={"path": Path(os.path.relpath(absolute, target_root)).as_posix()})


def ratio_deviation(live: int, attack: int, reference_live: int, reference_attack: int) -> float:
    """How many attack samples (live samples when the reference has none) the counts are off the reference ratio."""
    if reference_live == 0 and reference_attack == 0:
        return 0.0
    if reference_live == 0:
        return float(live)
    return abs(attack * reference_live - live * reference_attack) / reference_live


def merge_sets(original: DatasetManifest, synthetic: DatasetManifest, name: str | None = None) -> DatasetManifest:
    """Concatenate original and synthesized records, requiring the original live:attack ratio."""
    entries = list(original.entries)
    entries.extend(_rebase(entry, synthetic, original.root) for entry in synthetic.entries)
    try:
        merged = DatasetManifest(name=name or f"{original.name}+{synthetic.name}", root=original.root, entries=entries)
    except ValidationError as e:
        raise MergeError(f"Cannot merge {original.name} and {synthetic.name}: {e}") from e

    before = original.label_histogram
    after = merged.label_histogram
    deviation = ratio_deviation(after["live"], after["attack"], before["live"], before["attack"])
    if deviation > 1.0:
        raise MergeError(
            f"merged set {after['live']} live / {after['attack']} attack breaks the original ratio "
            f"{before['live']} live / {before['attack']} attack",
            {"original": before, "synthetic": synthetic.label_histogram, "merged": after},
        )
    return merged


def replace_live(original: DatasetManifest, synthetic: DatasetManifest, name: str | None = None) -> DatasetManifest:
    """Original attacks plus synthesized lives: a training set without any real live capture."""
    attacks = original.filter(label=Label.attack)
    lives = synthetic.filter(label=Label.live)
    entries = list(attacks.entries)
    entries.extend(_rebase(entry, lives, original.root) for entry in lives.entries)
    try:
        return DatasetManifest(name=name or f"{original.name}-live+{synthetic.name}", root=original.root, entries=entries)
    except ValidationError as e:
        raise MergeError(f"Cannot combine {original.name} and {synthetic.name}: {e}") from e
