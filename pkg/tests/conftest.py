"""Shared fixtures: desk-scale configs and a small synthetic benchmark on disk."""

from pathlib import Path

import numpy as np
import pytest

from fas_toolbox.config import Config, PCGANSettings, PMNSettings, SynthSettings
from fas_toolbox.datapipe.synthetic import make_synthetic_benchmark
from fas_toolbox.datapipe.types import DatasetManifest


@pytest.fixture
def desk_config(tmp_path: Path) -> Config:
    return Config.load(profile="desk_scale", output_root=(tmp_path / "runs").as_posix())


@pytest.fixture
def small_synth() -> SynthSettings:
    return SynthSettings(identities_per_domain=2, captures_per_identity=2)


@pytest.fixture
def benchmark(tmp_path: Path, small_synth: SynthSettings) -> DatasetManifest:
    return make_synthetic_benchmark(small_synth, seed=7, out_dir=tmp_path / "benchmark")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)

@pytest.fixture
def pcgan_settings() -> PCGANSettings:
    """A 16-pixel conversion GAN small enough for unit tests."""
    return PCGANSettings(
        image_size=16,
        content_dim=4,
        pattern_channels=4,
        base_channels=4,
        max_channels=8,
        patch_size=8,
        n_crops=2,
        n_reference_crops=2,
        batch_size=2,
        iterations=2,
        lr=1e-3,
    )


@pytest.fixture
def pmn_settings() -> PMNSettings:
    """Tiny random-init detector on 32-pixel faces."""
    return PMNSettings(
        backbone="tiny",
        embed_dim=16,
        feature_dim=8,
        input_size=32,
        lr=1e-3,
        batch_size=4,
        epochs=2,
        steps_per_epoch=2,
    )
