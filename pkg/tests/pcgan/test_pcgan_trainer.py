"""Tests for conversion GAN training and checkpoints."""

import csv
from unittest.mock import patch

import pytest
import torch

from fas_toolbox.app import RunContext
from fas_toolbox.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from fas_toolbox.config import Config
from fas_toolbox.errors import CheckpointError, DataError, NumericalError, UsageError
from fas_toolbox.pcgan.trainer import (
    LOSS_COLUMNS,
    PCGANTrainState,
    load_pcgan,
    sample_pair_indices,
    train_pcgan,
    train_step,
)


@pytest.fixture
def tiny_config(tmp_path, pcgan_settings) -> Config:
    return Config.load(
        profile="desk_scale",
        output_root=(tmp_path / "runs").as_posix(),
        pcgan=pcgan_settings.model_dump(),
    )


def _batch() -> tuple[torch.Tensor, torch.Tensor]:
    generator = torch.Generator().manual_seed(1)
    return torch.rand(2, 3, 16, 16, generator=generator), torch.rand(2, 3, 16, 16, generator=generator)


def _rows(path):
    with path.open(encoding="utf-8") as f:
        lines = f.read().splitlines()
    return lines[0], list(csv.reader(lines[1:]))


def test_train_step_record(pcgan_settings):
    """Test one update returns finite losses whose total is the sum of the terms."""
    torch.manual_seed(0)
    state = PCGANTrainState.create(pcgan_settings)
    state, record = train_step(state, _batch(), torch.Generator().manual_seed(0))
    assert state.iteration == 1
    assert record.iteration == 1
    assert record.total == pytest.approx(record.rec + record.rec_blur + record.adv_rec + record.adv_mix + record.pat)
    assert record.discriminator > 0
    assert list(state.history) == [record]


def test_zero_learning_rate_keeps_parameters(pcgan_settings):
    """Test a step with lr 0 leaves every parameter unchanged."""
    torch.manual_seed(0)
    state = PCGANTrainState.create(pcgan_settings.model_copy(update={"lr": 0.0}))
    before = {name: parameter.detach().clone() for name, parameter in state.model.named_parameters()}
    train_step(state, _batch(), torch.Generator().manual_seed(0))
    for name, parameter in state.model.named_parameters():
        assert torch.equal(parameter, before[name]), name


def test_train_step_rejects_identical_pair(pcgan_settings):
    """Test source and target must differ."""
    state = PCGANTrainState.create(pcgan_settings)
    x, _ = _batch()
    with pytest.raises(UsageError):
        train_step(state, (x, x), torch.Generator())
    with pytest.raises(UsageError):
        train_step(state, (x, x[:1]), torch.Generator())


def test_train_step_rejects_one_identical_pair(pcgan_settings):
    """Test a single repeated pair inside an otherwise valid batch is rejected."""
    state = PCGANTrainState.create(pcgan_settings)
    x_src, x_tgt = _batch()
    x_tgt = x_tgt.clone()
    x_tgt[1] = x_src[1]
    with pytest.raises(UsageError) as excinfo:
        train_step(state, (x_src, x_tgt), torch.Generator())
    assert excinfo.value.detail["pairs"] == [1]
    assert state.iteration == 0


def test_train_step_rolls_back_on_generator_failure(pcgan_settings):
    """Test a non-finite generator loss leaves the discriminators and optimizers untouched."""
    torch.manual_seed(0)
    state = PCGANTrainState.create(pcgan_settings)
    before = {name: tensor.detach().clone() for name, tensor in state.model.state_dict().items()}
    with patch("fas_toolbox.pcgan.trainer.pcgan_losses", side_effect=NumericalError("total is not finite")):
        with pytest.raises(NumericalError):
            train_step(state, _batch(), torch.Generator().manual_seed(0))

    for name, tensor in state.model.state_dict().items():
        assert torch.equal(tensor, before[name]), name
    assert state.discriminator_optimizer.state_dict()["state"] == {}
    assert state.generator_optimizer.state_dict()["state"] == {}
    assert state.iteration == 0
    assert len(state.history) == 0
    assert all(parameter.requires_grad for parameter in state.model.discriminator.parameters())


def test_resume_drops_rows_after_checkpoint(benchmark, tiny_config, tmp_path):
    """Test resuming from an earlier checkpoint does not duplicate logged iterations."""
    settings = tiny_config.pcgan.model_copy(update={"checkpoint_every": 1})
    context = RunContext(tiny_config.model_copy(update={"pcgan": settings}))
    out_dir = tmp_path / "pcgan"
    train_pcgan(benchmark, context, out_dir)

    state, _ = train_pcgan(benchmark, context, out_dir, resume=out_dir / "checkpoints" / "pcgan_000001.pt")
    assert state.iteration == 2
    header, rows = _rows(out_dir / "pcgan_losses.csv")
    assert header == context.header()
    assert [row[0] for row in rows[1:]] == ["1", "2"]


def test_sample_pair_indices_distinct():
    """Test sampled pairs never pair an image with itself and are reproducible."""
    src, tgt = sample_pair_indices(5, 64, seed=3, iteration=7)
    assert (src != tgt).all()
    again = sample_pair_indices(5, 64, seed=3, iteration=7)
    assert (src == again[0]).all() and (tgt == again[1]).all()


def test_train_pcgan_writes_artifacts(benchmark, tiny_config, tmp_path):
    """Test a short run writes the loss log and the final checkpoint."""
    context = RunContext(tiny_config)
    out_dir = tmp_path / "pcgan"
    state, final_path = train_pcgan(benchmark, context, out_dir)

    assert state.iteration == 2
    assert final_path.is_file()
    header, rows = _rows(out_dir / "pcgan_losses.csv")
    assert header == context.header()
    assert tuple(rows[0]) == LOSS_COLUMNS
    assert [row[0] for row in rows[1:]] == ["1", "2"]

    checkpoint = load_checkpoint(final_path, kind="pcgan", config_hash=context.config_hash)
    assert checkpoint.iteration == 2
    assert len(checkpoint.extra["history"]) == 2

    model = load_pcgan(final_path, tiny_config.pcgan, context.config_hash)
    assert not model.training


def test_train_pcgan_resume(benchmark, tiny_config, tmp_path):
    """Test resuming continues the iteration count and appends to the loss log."""
    out_dir = tmp_path / "pcgan"
    _, final_path = train_pcgan(benchmark, RunContext(tiny_config), out_dir)

    longer = tiny_config.model_copy(update={"pcgan": tiny_config.pcgan.model_copy(update={"iterations": 3})})
    context = RunContext(longer)
    # Test the changed iteration count alters the hash, so resuming needs force
    with pytest.raises(CheckpointError):
        train_pcgan(benchmark, context, out_dir, resume=final_path)
    state, _ = train_pcgan(benchmark, context, out_dir, resume=final_path, force=True)
    assert state.iteration == 3
    _, rows = _rows(out_dir / "pcgan_losses.csv")
    assert [row[0] for row in rows[1:]] == ["1", "2", "3"]


def test_train_pcgan_numerical_abort(benchmark, tiny_config, tmp_path):
    """Test a non-finite loss saves an aborted checkpoint and propagates."""
    out_dir = tmp_path / "pcgan"
    with patch("fas_toolbox.pcgan.trainer.train_step", side_effect=NumericalError("total is not finite")):
        with pytest.raises(NumericalError) as excinfo:
            train_pcgan(benchmark, RunContext(tiny_config), out_dir)
    assert excinfo.value.detail["iteration"] == 1
    assert excinfo.value.exit_code == 3
    assert (out_dir / "checkpoints" / "pcgan_aborted.pt").is_file()


def test_train_pcgan_needs_two_images(benchmark, tiny_config, tmp_path):
    """Test a one-image manifest is rejected."""
    single = benchmark.model_copy(update={"entries": benchmark.entries[:1]})
    with pytest.raises(DataError):
        train_pcgan(single, RunContext(tiny_config), tmp_path / "pcgan")


def test_checkpoint_validation(tmp_path, pcgan_settings):
    """Test kind, hash and architecture checks when loading."""
    state = PCGANTrainState.create(pcgan_settings)
    path = save_checkpoint(
        Checkpoint(kind="pcgan", config_hash="aaaa", seed=0, revision="v0", state={"model": state.model.state_dict()}),
        tmp_path / "model.pt",
    )

    # Test kind and hash mismatches
    with pytest.raises(CheckpointError, match="Expected a pmn checkpoint"):
        load_checkpoint(path, kind="pmn")
    with pytest.raises(CheckpointError, match="hash"):
        load_pcgan(path, pcgan_settings, config_hash="bbbb")
    assert load_pcgan(path, pcgan_settings, config_hash="bbbb", force=True) is not None

    # Test a different architecture and unreadable files
    with pytest.raises(CheckpointError):
        load_pcgan(path, pcgan_settings.model_copy(update={"base_channels": 8}))
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "missing.pt")
    (tmp_path / "junk.pt").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.pt")
