"""Artifact injection and removal with a trained conversion GAN.

Injection renders a live sample's content with an attack sample's pattern and labels the result
attack; removal renders an attack sample's content with a live sample's pattern and labels it live.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import torch

from fas_toolbox.config import Config, ConvertSettings
from fas_toolbox.datapipe.crop import prepare_face, resize
from fas_toolbox.datapipe.manifest import load_sample, write_image, write_manifest
from fas_toolbox.datapipe.rng import substream
from fas_toolbox.datapipe.tensors import to_images, to_tensor
from fas_toolbox.datapipe.types import DatasetManifest, FaceSample, Label, ManifestEntry, Provenance
from fas_toolbox.errors import ConversionMisuseError
from fas_toolbox.log import logger
from fas_toolbox.pcgan.networks import PCGANModel

SYNTHETIC_MANIFEST = "synthetic.tsv"
PAIRING_STREAM = 3


def _check_label(sample: FaceSample, expected: Label, role: str) -> None:
    if sample.label is not expected:
        raise ConversionMisuseError(
            f"{role} must be a {expected.value} sample, got {sample.label.value} ({sample.path or '<memory>'})",
            {"role": role, "label": sample.label.value},
        )


def _fit(sample: FaceSample, size: int) -> np.ndarray:
    return sample.image if sample.size == (size, size) else resize(sample.image, size)


@torch.no_grad()
def _swap(model: PCGANModel, contents: Sequence[FaceSample], patterns: Sequence[FaceSample]) -> list[np.ndarray]:
    model.eval()
    z_con, _ = model.encode(to_tensor([_fit(sample, model.image_size) for sample in contents]))
    _, z_pat = model.encode(to_tensor([_fit(sample, model.image_size) for sample in patterns]))
    return to_images(model.generate(z_con, z_pat))


def _synthesized(content: FaceSample, image: np.ndarray, label: Label, attack_type: str | None) -> FaceSample:
    return FaceSample(
        image=image,
        label=label,
        domain_id=content.domain_id,
        attack_type=attack_type,
        identity_id=content.identity_id,
        provenance=Provenance.synthesized,
    )


def inject_artifacts(model: PCGANModel, lives: Sequence[FaceSample], attacks: Sequence[FaceSample]) -> list[FaceSample]:
    for live, attack in zip(lives, attacks, strict=True):
        _check_label(live, Label.live, "content source")
        _check_label(attack, Label.attack, "pattern source")
    images = _swap(model, lives, attacks)
    return [
        _synthesized(live, image, Label.attack, attack.attack_type)
        for live, attack, image in zip(lives, attacks, images, strict=True)
    ]


def remove_artifacts(model: PCGANModel, attacks: Sequence[FaceSample], lives: Sequence[FaceSample]) -> list[FaceSample]:
    for attack, live in zip(attacks, lives, strict=True):
        _check_label(attack, Label.attack, "content source")
        _check_label(live, Label.live, "pattern source")
    images = _swap(model, attacks, lives)
    return [_synthesized(attack, image, Label.live, None) for attack, image in zip(attacks, images, strict=True)]


def inject_artifact(x_live: FaceSample, x_attack: FaceSample, model: PCGANModel) -> FaceSample:
    """Synthetic attack: content of `x_live`, artifact pattern of `x_attack`."""
    return inject_artifacts(model, [x_live], [x_attack])[0]


def remove_artifact(x_attack: FaceSample, x_live: FaceSample, model: PCGANModel) -> FaceSample:
    """Synthetic live: content of `x_attack`, pattern of `x_live`."""
    return remove_artifacts(model, [x_attack], [x_live])[0]


def plan_pairs(
    manifest: DatasetManifest,
    settings: ConvertSettings,
    seed: int,
) -> tuple[list[tuple[ManifestEntry, ManifestEntry]], list[tuple[ManifestEntry, ManifestEntry]]]:
    """(content, pattern) pairs for injection and for removal.

    Every attack donates its pattern once and every live donates its pattern once, so a `both`
    conversion yields as many synthetic attacks as original attacks and as many synthetic lives as
    original lives.
    """
    rng = substream(seed, PAIRING_STREAM)
    lives = [entry for entry in manifest.entries if entry.label is Label.live]
    attacks = [entry for entry in manifest.entries if entry.label is Label.attack]

    def partners(donor: ManifestEntry, pool: list[ManifestEntry]) -> list[ManifestEntry]:
        return [entry for entry in pool if entry.domain_id == donor.domain_id] if settings.same_domain else pool

    inject: list[tuple[ManifestEntry, ManifestEntry]] = []
    remove: list[tuple[ManifestEntry, ManifestEntry]] = []
    exhausted = 0
    if settings.direction in ("both", "live_to_spoof"):
        for attack in attacks:
            candidates = partners(attack, lives)
            if not candidates:
                exhausted += 1
                continue
            inject.append((candidates[int(rng.integers(len(candidates)))], attack))
    if settings.direction in ("both", "spoof_to_live"):
        for live in lives:
            candidates = partners(live, attacks)
            if not candidates:
                exhausted += 1
                continue
            remove.append((candidates[int(rng.integers(len(candidates)))], live))
    if exhausted:
        logger.warning(f"{exhausted} pattern donors have no partner of the opposite label; output is partial")
    return inject, remove


def _stem(entry: ManifestEntry) -> str:
    return Path(entry.path).stem


def _write_batch(
    root: Path,
    pairs: Sequence[tuple[ManifestEntry, ManifestEntry]],
    samples: Sequence[FaceSample],
    first_index: int,
) -> list[ManifestEntry]:
    entries = []
    for index, ((content, pattern), sample) in enumerate(zip(pairs, samples, strict=True), start=first_index):
        relative = Path(sample.domain_id) / sample.label.value / f"{index:05d}_{_stem(content)}__{_stem(pattern)}.png"
        write_image(sample.image, root / relative)
        entries.append(
            ManifestEntry(
                path=relative.as_posix(),
                label=sample.label,
                domain_id=sample.domain_id,
                attack_type=sample.attack_type,
                identity_id=sample.identity_id,
                provenance=Provenance.synthesized,
            )
        )
    return entries


def convert_manifest(
    manifest: DatasetManifest,
    model: PCGANModel,
    config: Config,
    out_dir: str | Path,
    header: str | None = None,
    batch_size: int = 16,
) -> DatasetManifest:
    """Run the planned conversions, write PNGs and a synthesized-provenance manifest fragment."""
    root = Path(out_dir).expanduser().resolve()
    inject, remove = plan_pairs(manifest, config.convert, config.seed)

    def load(entry: ManifestEntry) -> FaceSample:
        return prepare_face(load_sample(manifest, entry), config.data.padding, model.image_size)

    entries: list[ManifestEntry] = []
    for pairs, convert in ((inject, inject_artifacts), (remove, remove_artifacts)):
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            samples = convert(model, [load(content) for content, _ in chunk], [load(pattern) for _, pattern in chunk])
            entries.extend(_write_batch(root, chunk, samples, len(entries)))

    synthetic = DatasetManifest(name="synthetic", root=root, entries=entries)
    write_manifest(synthetic, root / SYNTHETIC_MANIFEST, header=header)
    logger.info(f"Converted {len(inject)} live→attack and {len(remove)} attack→live pairs: {synthetic.metadata}")
    return synthetic
