"""Line-delimited dataset manifests and image IO.

One record per line, tab-separated:

    path  label  domain  attack_type  identity  provenance  x  y  w  h

Optional fields are written as `-`; the four bbox columns are either all integers or all `-`.
Lines starting with `#` carry provenance metadata and are skipped on load.
"""

from __future__ import annotations

from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import ValidationError

from fas_toolbox.datapipe.types import DatasetManifest, FaceSample, Label, ManifestEntry, Provenance
from fas_toolbox.errors import LabelValidationError, ManifestError, ManifestParseError, OutputError
from fas_toolbox.log import logger

MISSING = "-"
N_FIELDS = 10


def _optional(value: str) -> str | None:
    return None if value == MISSING else value


def parse_manifest_line(line: str, line_number: int) -> ManifestEntry:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != N_FIELDS:
        raise ManifestParseError(f"expected {N_FIELDS} tab-separated fields, got {len(fields)}", line_number)

    path, label, domain, attack_type, identity, provenance, *bbox_fields = fields
    if not path or path == MISSING:
        raise ManifestParseError("empty path", line_number)
    if label not in {item.value for item in Label}:
        raise LabelValidationError(f"unknown label {label!r}, accepted: live, attack", line_number)
    if provenance not in {item.value for item in Provenance}:
        raise ManifestParseError(f"unknown provenance {provenance!r}", line_number)
    if not domain or domain == MISSING:
        raise ManifestParseError("missing domain", line_number)

    if all(value == MISSING for value in bbox_fields):
        bbox = None
    else:
        try:
            bbox = tuple(int(value) for value in bbox_fields)
        except ValueError:
            raise ManifestParseError(f"bbox must be four integers or '-', got {bbox_fields}", line_number) from None
        if bbox[2] <= 0 or bbox[3] <= 0:
            raise ManifestParseError(f"bbox width and height must be positive, got {bbox}", line_number)

    return ManifestEntry(
        path=path,
        label=Label(label),
        domain_id=domain,
        attack_type=_optional(attack_type),
        identity_id=_optional(identity),
        provenance=Provenance(provenance),
        bbox=bbox,
    )


def format_manifest_line(entry: ManifestEntry) -> str:
    bbox = [str(value) for value in entry.bbox] if entry.bbox else [MISSING] * 4
    return "\t".join([
        entry.path,
        entry.label.value,
        entry.domain_id,
        entry.attack_type or MISSING,
        entry.identity_id or MISSING,
        entry.provenance.value,
        *bbox,
    ])


def load_manifest(path: str | Path, *, check_files: bool = True) -> DatasetManifest:
    """Read a manifest file; entries keep file order and paths resolve against its directory."""
    manifest_path = Path(path).expanduser()
    if not manifest_path.is_file():
        raise ManifestError(f"Manifest not found: {manifest_path.as_posix()}")

    try:
        lines = manifest_path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise ManifestError(f"Failed to read manifest {manifest_path.as_posix()}: {e}") from e

    entries = [
        parse_manifest_line(line, number)
        for number, line in enumerate(lines, start=1)
        if line.strip() and not line.startswith("#")
    ]
    try:
        manifest = DatasetManifest(name=manifest_path.stem, root=manifest_path.parent.resolve(), entries=entries)
    except ValidationError as e:
        raise ManifestError(f"Invalid manifest {manifest_path.as_posix()}: {e}") from e

    if check_files:
        for number, entry in enumerate(manifest.entries, start=1):
            if not manifest.resolve(entry).is_file():
                raise ManifestError(f"entry {number}: image not found: {entry.path}", {"entry": number})

    logger.info(f"Loaded manifest {manifest.name}: {manifest.metadata}")
    return manifest


def write_manifest(manifest: DatasetManifest, path: str | Path, header: str | None = None) -> Path:
    """Single-writer manifest output; returns the written path."""
    manifest_path = Path(path).expanduser()
    lines = [header] if header else []
    lines.extend(format_manifest_line(entry) for entry in manifest.entries)
    try:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Failed to write manifest {manifest_path.as_posix()}: {e}") from e
    return manifest_path


def read_image(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"), dtype=np.float32)
    except OSError as e:
        raise ManifestError(f"Failed to read image {Path(path).as_posix()}: {e}") from e
    return pixels / 255.0


def write_image(image: np.ndarray, path: str | Path) -> Path:
    image_path = Path(path)
    pixels = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    try:
        image_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels).save(image_path, format="PNG")
    except OSError as e:
        raise OutputError(f"Failed to write image {image_path.as_posix()}: {e}") from e
    return image_path


def load_sample(manifest: DatasetManifest, entry: ManifestEntry) -> FaceSample:
    return FaceSample(
        image=read_image(manifest.resolve(entry)),
        label=entry.label,
        domain_id=entry.domain_id,
        attack_type=entry.attack_type,
        identity_id=entry.identity_id,
        provenance=entry.provenance,
        bbox=entry.bbox,
        path=entry.path,
    )


def load_samples(
    manifest: DatasetManifest,
    entries: Iterable[ManifestEntry] | None = None,
    workers: int = 1,
) -> list[FaceSample]:
    """Load samples in manifest order; decoding runs on `workers` threads."""
    selected = list(manifest.entries if entries is None else entries)
    if workers <= 1:
        return [load_sample(manifest, entry) for entry in selected]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda entry: load_sample(manifest, entry), selected))
