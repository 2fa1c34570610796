"""Desk-scale conversion runs on the synthetic benchmark."""

import numpy as np
import pytest

from fas_toolbox.app import RunContext
from fas_toolbox.artifactviz.lines import lines_for
from fas_toolbox.artifactviz.sobel import overlay_band_energy
from fas_toolbox.config import Config, ConvertSettings
from fas_toolbox.datapipe.crop import prepare_face
from fas_toolbox.datapipe.manifest import load_sample
from fas_toolbox.datapipe.synthetic import make_synthetic_benchmark
from fas_toolbox.datapipe.types import Provenance
from fas_toolbox.pcgan.convert import inject_artifact, plan_pairs, remove_artifact
from fas_toolbox.pcgan.trainer import load_pcgan, train_pcgan


@pytest.mark.slow
def test_conversion_moves_overlay_energy(tmp_path):
    """Test injection adds and removal strips the overlay on held-out domain pairs."""
    config = Config.load(profile="desk_scale", output_root=(tmp_path / "runs").as_posix())
    context = RunContext.create(config)
    benchmark = make_synthetic_benchmark(config.synth, config.seed, tmp_path / "benchmark")
    source = benchmark.filter(domains={"A", "B"}, provenance=Provenance.original)
    _, checkpoint = train_pcgan(source, context, tmp_path / "pcgan")
    model = load_pcgan(checkpoint, config.pcgan)

    held_out = benchmark.filter(domains={"C"}, provenance=Provenance.original)
    frequency = next(domain.frequency for domain in config.synth.domains if domain.name == "C")
    inject, remove = plan_pairs(held_out, ConvertSettings(direction="both"), config.seed)

    def load(entry):
        return prepare_face(load_sample(held_out, entry), config.data.padding, model.image_size)

    injected_ratios = []
    for live_entry, attack_entry in inject:
        live = load(live_entry)
        injected = inject_artifact(live, load(attack_entry), model)
        injected_ratios.append(
            overlay_band_energy(injected.image, frequency) / overlay_band_energy(live.image, frequency)
        )

    removed_ratios, fewer_lines = [], []
    for attack_entry, live_entry in remove:
        attack = load(attack_entry)
        removed = remove_artifact(attack, load(live_entry), model)
        removed_ratios.append(
            overlay_band_energy(removed.image, frequency) / overlay_band_energy(attack.image, frequency)
        )
        fewer_lines.append(len(lines_for(removed.image, config.viz)) < len(lines_for(attack.image, config.viz)))

    assert np.mean(np.asarray(injected_ratios) >= 5.0) >= 0.9
    assert np.mean(np.asarray(removed_ratios) <= 0.5) >= 0.9
    assert np.mean(fewer_lines) >= 0.9
