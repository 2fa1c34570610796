"""Tests for detector training, scoring and run outputs."""

import json

import numpy as np
import pytest
import torch

from fas_toolbox.app import RunContext
from fas_toolbox.config import Config
from fas_toolbox.errors import CheckpointError, DataError, ShapeError, UsageError
from fas_toolbox.eval.protocol import ProtocolSpec
from fas_toolbox.eval.scores import read_scores
from fas_toolbox.pmn.model import PMNModel
from fas_toolbox.pmn.trainer import (
    PMNTrainState,
    crop_spec,
    load_pmn,
    pmn_train_step,
    score,
    score_batch,
    split_protocol,
    train_pmn,
)


@pytest.fixture
def state(pmn_settings) -> PMNTrainState:
    torch.manual_seed(0)
    return PMNTrainState.create(pmn_settings)


@pytest.fixture
def tiny_config(tmp_path, pmn_settings) -> Config:
    return Config.load(
        profile="desk_scale",
        output_root=(tmp_path / "runs").as_posix(),
        crop={"output_size": 32},
        pmn=pmn_settings.model_dump(),
    )


def _batches(n: int = 4):
    generator = torch.Generator().manual_seed(2)
    labels = torch.tensor([0, 1] * (n // 2))
    faces = torch.rand(n, 3, 32, 32, generator=generator)
    patches = torch.rand(n, 3, 32, 32, generator=generator)
    return (faces, labels), (patches, labels.clone())


def test_create_freezes_text_encoder(state):
    """Test prompt means are set and only the image tower, temperature and heads train."""
    model = state.model
    assert torch.allclose(model.prompt_means.norm(dim=1), torch.ones(2), atol=1e-6)
    assert not model.backbone.token_embedding.weight.requires_grad
    assert not model.backbone.text_projection.weight.requires_grad
    assert model.backbone.logit_scale.requires_grad
    assert all(parameter.requires_grad for parameter in model.backbone.visual.parameters())
    assert all(parameter.requires_grad for parameter in model.heads.parameters())


def test_train_step_record(state):
    """Test the logged total matches the weighted components and the text tower stays fixed."""
    text_before = state.model.backbone.token_embedding.weight.detach().clone()
    state, record = pmn_train_step(state, *_batches())
    settings = state.settings
    expected = record.clip + record.face + record.patch + settings.alpha * record.center + settings.beta * record.l2
    assert record.total == pytest.approx(expected, rel=1e-5)
    assert record.iteration == 1 and record.epoch == 1
    assert 0.0 <= record.accuracy <= 1.0
    assert torch.equal(state.model.backbone.token_embedding.weight, text_before)
    assert not torch.equal(state.centers.centers, torch.zeros_like(state.centers.centers))


def test_train_step_ablations(pmn_settings):
    """Test disabled terms are logged as zero and centers stay put without the center loss."""
    torch.manual_seed(0)
    settings = pmn_settings.model_copy(update={"use_clip_loss": False, "use_patch_loss": False, "use_center_loss": False})
    state = PMNTrainState.create(settings)
    state, record = pmn_train_step(state, *_batches())
    assert record.clip == 0.0 and record.patch == 0.0 and record.center == 0.0
    assert torch.equal(state.centers.centers, torch.zeros_like(state.centers.centers))


def test_train_step_input_checks(state):
    """Test wrong image sizes and labels are rejected."""
    (faces, labels), patches = _batches()
    with pytest.raises(ShapeError):
        pmn_train_step(state, (faces[..., :16, :16], labels), patches)
    with pytest.raises(UsageError):
        pmn_train_step(state, (faces, labels + 1), patches)


def test_inference_ignores_patch_head_and_text_tower(state):
    """Test scores are bit-identical after perturbing the patch head and the text encoder."""
    model = state.model.eval()
    images = torch.rand(3, 3, 32, 32)
    before = score_batch(images, model.backbone, model.heads)
    with torch.no_grad():
        model.heads.patch.weight.add_(1.0)
        model.backbone.token_embedding.weight.mul_(-3.0)
        model.backbone.text_projection.bias.add_(2.0)
        model.prompt_means.zero_()
    assert torch.equal(score_batch(images, model.backbone, model.heads), before)


def test_score_undecided_head(state):
    """Test a zeroed face head scores exactly one half."""
    model = state.model.eval()
    with torch.no_grad():
        model.heads.face.weight.zero_()
        model.heads.face.bias.zero_()
    assert score(torch.rand(3, 32, 32), model.backbone, model.heads) == 0.5
    assert score(np.random.default_rng(0).random((32, 32, 3)), model.backbone, model.heads) == 0.5


def test_score_single_image_only(state):
    """Test score refuses batches and keeps the module mode."""
    model = state.model.train()
    with pytest.raises(ShapeError):
        score(torch.rand(2, 3, 32, 32), model.backbone, model.heads)
    value = score(torch.rand(1, 3, 32, 32), model.backbone, model.heads)
    assert 0.0 <= value <= 1.0
    assert model.training


def test_crop_spec_must_match_input(tiny_config):
    """Test patch output size must equal the detector input size."""
    assert crop_spec(tiny_config).output_size == 32
    mismatched = tiny_config.model_copy(update={"crop": tiny_config.crop.model_copy(update={"output_size": 48})})
    with pytest.raises(UsageError):
        crop_spec(mismatched)


def test_split_protocol(benchmark):
    """Test the training split covers the source domains and the test split the held-out one."""
    spec = ProtocolSpec.parse("AB→C")
    train, test = split_protocol(benchmark, spec)
    assert set(train.domain_histogram) == {"A", "B"}
    assert set(test.domain_histogram) == {"C"}

    with pytest.raises(DataError):
        split_protocol(benchmark, ProtocolSpec.parse("AB→D"))
    with pytest.raises(DataError):
        split_protocol(benchmark, ProtocolSpec.parse("XY→C"))


def test_train_pmn_outputs(benchmark, tiny_config, tmp_path):
    """Test a two-epoch run writes metadata, losses, per-epoch scores and checkpoints."""
    context = RunContext(tiny_config)
    spec = ProtocolSpec.parse("AB→C", epochs=2, k=2)
    out_dir = tmp_path / "pmn"
    state, final_path = train_pmn(benchmark, spec, context, out_dir)

    assert state.epoch == 2
    assert state.iteration == 4
    metadata = json.loads((out_dir / "pmn_run.json").read_text(encoding="utf-8"))
    assert metadata["protocol"] == "AB→C"
    assert metadata["train_domains"] == ["A", "B"]
    assert metadata["provenance"]["config_hash"] == context.config_hash

    lines = (out_dir / "pmn_losses.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == context.header()
    assert len(lines) == 2 + 4

    test_size = benchmark.domain_histogram["C"]
    for epoch in (1, 2):
        scores = read_scores(out_dir / "scores" / f"epoch_{epoch}.scores")
        assert len(scores) == test_size
        assert set(scores.domains) == {"C"}
        assert all(0.0 <= value <= 1.0 for value in scores.scores)

    model = load_pmn(final_path, tiny_config.pmn, context.config_hash)
    assert isinstance(model, PMNModel)
    assert torch.equal(model.prompt_means, state.model.prompt_means)


def test_train_pmn_resume_and_mismatch(benchmark, tiny_config, tmp_path):
    """Test resuming a finished run is a no-op on epochs and a different architecture is refused."""
    context = RunContext(tiny_config)
    spec = ProtocolSpec.parse("AB→C", epochs=2, k=2)
    out_dir = tmp_path / "pmn"
    _, final_path = train_pmn(benchmark, spec, context, out_dir)

    state, _ = train_pmn(benchmark, spec, context, out_dir, resume=final_path)
    assert state.epoch == 2 and state.iteration == 4

    with pytest.raises(CheckpointError):
        load_pmn(final_path, tiny_config.pmn.model_copy(update={"feature_dim": 4}))
