"""Procedural moiré benchmark.

Live captures are smooth elliptical luminance blobs with per-identity parameters. Each attack
capture is its paired live capture plus a sinusoidal overlay whose frequency and orientation are
fixed per domain, so domains differ in artifact statistics and cross-domain generalization can be
measured at desk scale.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from fas_toolbox.config import DomainSettings, SynthSettings
from fas_toolbox.datapipe.manifest import write_image, write_manifest
from fas_toolbox.datapipe.rng import substream
from fas_toolbox.datapipe.types import BBox, DatasetManifest, Label, ManifestEntry, Provenance
from fas_toolbox.errors import UsageError
from fas_toolbox.log import logger

MANIFEST_NAME = "manifest.tsv"


def overlay_pattern(size: int, frequency: float, orientation: float, amplitude: float, phase: float = 0.0) -> np.ndarray:
    """size×size sinusoid; `frequency` in cycles per pixel, `orientation` in degrees."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = np.deg2rad(orientation)
    return amplitude * np.sin(2 * np.pi * frequency * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)


def _gaussian(xx: np.ndarray, yy: np.ndarray, cx: float, cy: float, sx: float, sy: float) -> np.ndarray:
    return np.exp(-0.5 * (((xx - cx) / sx) ** 2 + ((yy - cy) / sy) ** 2))


def render_live(size: int, rng: np.random.Generator, identity_rng: np.random.Generator, brightness: float) -> tuple[np.ndarray, BBox]:
    """One live capture and its face bbox; identity parameters come from `identity_rng`."""
    axis_x = identity_rng.uniform(0.18, 0.24) * size
    axis_y = identity_rng.uniform(0.24, 0.30) * size
    skin = identity_rng.uniform(0.45, 0.62) + brightness
    tint = identity_rng.uniform(-0.04, 0.04, size=3)
    background = identity_rng.uniform(0.22, 0.34) + brightness
    eye_depth = identity_rng.uniform(0.10, 0.18)

    cx = size / 2 + rng.uniform(-0.06, 0.06) * size
    cy = size / 2 + rng.uniform(-0.06, 0.06) * size
    slope = rng.uniform(-0.08, 0.08, size=2)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    radius = np.sqrt(((xx - cx) / axis_x) ** 2 + ((yy - cy) / axis_y) ** 2)
    mask = 1.0 / (1.0 + np.exp((radius - 1.0) / 0.08))
    back = background + slope[0] * (xx / size - 0.5) + slope[1] * (yy / size - 0.5)

    features = eye_depth * (
        _gaussian(xx, yy, cx - 0.4 * axis_x, cy - 0.25 * axis_y, 0.12 * axis_x, 0.1 * axis_y)
        + _gaussian(xx, yy, cx + 0.4 * axis_x, cy - 0.25 * axis_y, 0.12 * axis_x, 0.1 * axis_y)
        + 0.8 * _gaussian(xx, yy, cx, cy + 0.45 * axis_y, 0.3 * axis_x, 0.09 * axis_y)
    )
    luminance = back * (1.0 - mask) + (skin - features) * mask
    image = np.clip(luminance[..., None] + tint[None, None, :] * mask[..., None], 0.12, 0.88)

    x0 = max(int(round(cx - axis_x)), 0)
    y0 = max(int(round(cy - axis_y)), 0)
    bbox = (x0, y0, min(int(round(2 * axis_x)), size - x0), min(int(round(2 * axis_y)), size - y0))
    return image, bbox


def render_attack(live: np.ndarray, domain: DomainSettings, phase: float) -> np.ndarray:
    pattern = overlay_pattern(live.shape[0], domain.frequency, domain.orientation, domain.amplitude, phase)
    return np.clip(live + pattern[..., None], 0.0, 1.0)


def make_synthetic_benchmark(
    config: SynthSettings,
    seed: int,
    out_dir: str | Path,
    header: str | None = None,
) -> DatasetManifest:
    """Write the benchmark images and manifest under `out_dir`; deterministic given `seed`."""
    if len(config.domains) < 2:
        raise UsageError(f"the synthetic benchmark needs at least 2 domains, got {len(config.domains)}")
    names = [domain.name for domain in config.domains]
    if len(set(names)) != len(names):
        raise UsageError(f"domain names must be unique, got {names}")

    root = Path(out_dir).expanduser().resolve()
    size = config.image_size
    entries: list[ManifestEntry] = []

    for domain_index, domain in enumerate(config.domains):
        for identity in range(config.identities_per_domain):
            identity_id = f"{domain.name}{identity:03d}"
            for capture in range(config.captures_per_identity):
                identity_rng = substream(seed, domain_index, identity)
                capture_rng = substream(seed, domain_index, identity, capture + 1)
                live, bbox = render_live(size, capture_rng, identity_rng, domain.brightness)
                phase = float(capture_rng.uniform(0.0, 2 * np.pi))
                attack = render_attack(live, domain, phase)

                stem = f"{identity_id}_{capture:02d}.png"
                for label, image in ((Label.live, live), (Label.attack, attack)):
                    relative = Path(domain.name) / label.value / stem
                    write_image(image, root / relative)
                    entries.append(
                        ManifestEntry(
                            path=relative.as_posix(),
                            label=label,
                            domain_id=domain.name,
                            attack_type=config.attack_type if label is Label.attack else None,
                            identity_id=identity_id,
                            provenance=Provenance.original,
                            bbox=bbox,
                        )
                    )

    manifest = DatasetManifest(name="synthetic", root=root, entries=entries)
    write_manifest(manifest, root / MANIFEST_NAME, header=header)
    logger.info(f"Synthetic benchmark written to {root.as_posix()}: {manifest.metadata}")
    return manifest


def paired_live_path(entry: ManifestEntry) -> str:
    """Path of the live capture an attack capture of the synthetic benchmark was rendered from."""
    parts = Path(entry.path).parts
    return Path(parts[0], Label.live.value, *parts[2:]).as_posix()
