"""Tests for merging original and synthesized sets."""

from pathlib import Path

import pytest

from fas_toolbox.datapipe.merge import merge_sets, ratio_deviation, replace_live
from fas_toolbox.datapipe.types import DatasetManifest, Label, ManifestEntry, Provenance
from fas_toolbox.errors import MergeError


def _manifest(root: Path, prefix: str, live: int, attack: int, provenance=Provenance.original) -> DatasetManifest:
    entries = [
        ManifestEntry(path=f"{prefix}/{label.value}_{i}.png", label=label, domain_id="A", provenance=provenance)
        for label, count in ((Label.live, live), (Label.attack, attack))
        for i in range(count)
    ]
    return DatasetManifest(name=prefix, root=root, entries=entries)


def test_merge_keeps_ratio(tmp_path):
    """Test merging balanced sets doubles both classes."""
    original = _manifest(tmp_path, "orig", 10, 10)
    synthetic = _manifest(tmp_path, "syn", 10, 10, Provenance.synthesized)
    merged = merge_sets(original, synthetic)
    assert merged.label_histogram == {"live": 20, "attack": 20}
    assert merged.entries[:20] == original.entries
    assert merged.root == original.root


def test_merge_empty_synthetic(tmp_path):
    """Test merging an empty synthetic set returns the original entries."""
    original = _manifest(tmp_path, "orig", 10, 10)
    merged = merge_sets(original, _manifest(tmp_path, "syn", 0, 0))
    assert merged.entries == original.entries


def test_merge_rejects_ratio_change(tmp_path):
    """Test a live-only synthetic set breaks the ratio."""
    with pytest.raises(MergeError) as excinfo:
        merge_sets(_manifest(tmp_path, "orig", 10, 10), _manifest(tmp_path, "syn", 10, 0))
    assert excinfo.value.detail["merged"] == {"live": 20, "attack": 10}


def test_merge_rejects_duplicate_paths(tmp_path):
    """Test colliding paths cannot be merged."""
    with pytest.raises(MergeError):
        merge_sets(_manifest(tmp_path, "orig", 2, 2), _manifest(tmp_path, "orig", 2, 2))


def test_merge_rebases_paths(tmp_path):
    """Test synthetic paths are rewritten relative to the original root."""
    original = _manifest(tmp_path / "data", "orig", 1, 1)
    synthetic = _manifest(tmp_path / "runs" / "conv", "syn", 1, 1)
    merged = merge_sets(original, synthetic)
    assert merged.entries[-1].path == "../runs/conv/syn/attack_0.png"
    assert merged.resolve(merged.entries[-1]).resolve() == (tmp_path / "runs/conv/syn/attack_0.png").resolve()


def test_ratio_deviation():
    """Test deviation counts in units of samples."""
    assert ratio_deviation(20, 20, 10, 10) == 0.0
    assert ratio_deviation(21, 20, 10, 10) == 1.0
    assert ratio_deviation(0, 0, 0, 0) == 0.0
    assert ratio_deviation(3, 5, 0, 4) == 3.0


def test_replace_live(tmp_path):
    """Test the live-free set keeps real attacks and synthesized lives."""
    original = _manifest(tmp_path, "orig", 4, 4)
    synthetic = _manifest(tmp_path, "syn", 4, 4, Provenance.synthesized)
    replaced = replace_live(original, synthetic)
    assert replaced.label_histogram == {"live": 4, "attack": 4}
    assert all(entry.provenance is Provenance.synthesized for entry in replaced.filter(label=Label.live).entries)
    assert all(entry.provenance is Provenance.original for entry in replaced.filter(label=Label.attack).entries)
