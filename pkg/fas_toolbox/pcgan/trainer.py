from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from pydantic import BaseModel

from fas_toolbox.app import CsvLog, RunContext
from fas_toolbox.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from fas_toolbox.config import Config, PCGANSettings
from fas_toolbox.datapipe.crop import prepare_face
from fas_toolbox.datapipe.manifest import load_samples
from fas_toolbox.datapipe.rng import substream, torch_generator
from fas_toolbox.datapipe.tensors import to_tensor
from fas_toolbox.datapipe.types import DatasetManifest
from fas_toolbox.errors import CheckpointError, DataError, NumericalError, UsageError
from fas_toolbox.log import logger
from fas_toolbox.pcgan.losses import discriminator_loss, patch_discriminator_loss, pcgan_losses
from fas_toolbox.pcgan.networks import PCGANModel
from fas_toolbox.pcgan.patches import PatchSampler

LOSS_COLUMNS = ("iteration", "rec", "rec_blur", "adv_rec", "adv_mix", "pat", "total")
CHECKPOINT_KIND = "pcgan"

# Substream tags of the per-iteration random sources.
PAIR_STREAM = 1
CROP_STREAM = 2


class LossRecord(BaseModel):
    iteration: int
    rec: float
    rec_blur: float
    adv_rec: float
    adv_mix: float
    pat: float
    total: float
    discriminator: float

    def csv_row(self) -> list[str]:
        return [str(self.iteration), *(f"{getattr(self, name):.8g}" for name in LOSS_COLUMNS[1:])]


@dataclass
class PCGANTrainState:
    """Single-owner training state: networks, both optimizers, counter and a bounded loss history."""

    model: PCGANModel
    generator_optimizer: torch.optim.Optimizer
    discriminator_optimizer: torch.optim.Optimizer
    sampler: PatchSampler
    r1_weight: float = 10.0
    iteration: int = 0
    history: deque[LossRecord] = field(default_factory=lambda: deque(maxlen=1000))

    @classmethod
    def create(cls, settings: PCGANSettings, model: PCGANModel | None = None) -> PCGANTrainState:
        model = model or PCGANModel(settings)
        return cls(
            model=model,
            generator_optimizer=torch.optim.Adam(model.generator_parameters(), lr=settings.lr, betas=settings.betas),
            discriminator_optimizer=torch.optim.Adam(model.discriminator_parameters(), lr=settings.lr, betas=settings.betas),
            sampler=PatchSampler.from_settings(settings),
            r1_weight=settings.r1_weight,
            history=deque(maxlen=settings.history_size),
        )

    def to_checkpoint(self, context: RunContext) -> Checkpoint:
        return Checkpoint(
            kind=CHECKPOINT_KIND,
            config_hash=context.config_hash,
            seed=context.seed,
            revision=context.revision,
            iteration=self.iteration,
            state={"model": self.model.state_dict()},
            optimizers={
                "generator": self.generator_optimizer.state_dict(),
                "discriminator": self.discriminator_optimizer.state_dict(),
            },
            extra={"history": [record.model_dump() for record in self.history]},
        )

    def restore(self, checkpoint: Checkpoint) -> None:
        self.model.load_state_dict(checkpoint.state["model"])
        if checkpoint.optimizers:
            self.generator_optimizer.load_state_dict(checkpoint.optimizers["generator"])
            self.discriminator_optimizer.load_state_dict(checkpoint.optimizers["discriminator"])
        self.iteration = checkpoint.iteration
        self.history.clear()
        self.history.extend(LossRecord(**record) for record in checkpoint.extra.get("history", []))


def _set_trainable(module: torch.nn.Module, trainable: bool) -> None:
    for parameter in module.parameters():
        parameter.requires_grad_(trainable)


def _check_parameters(model: torch.nn.Module) -> None:
    for name, parameter in model.named_parameters():
        if not bool(torch.isfinite(parameter).all()):
            raise NumericalError(f"parameter {name} became non-finite", {"parameter": name})


@dataclass
class _Snapshot:
    """Copies of the weights and optimizer states taken before an iteration."""

    model: dict[str, torch.Tensor]
    generator_optimizer: dict
    discriminator_optimizer: dict

    @classmethod
    def take(cls, state: PCGANTrainState) -> _Snapshot:
        return cls(
            model={name: tensor.detach().clone() for name, tensor in state.model.state_dict().items()},
            generator_optimizer=copy.deepcopy(state.generator_optimizer.state_dict()),
            discriminator_optimizer=copy.deepcopy(state.discriminator_optimizer.state_dict()),
        )

    def restore(self, state: PCGANTrainState) -> None:
        state.model.load_state_dict(self.model)
        state.generator_optimizer.load_state_dict(self.generator_optimizer)
        state.discriminator_optimizer.load_state_dict(self.discriminator_optimizer)


def _check_pairs(x_src: torch.Tensor, x_tgt: torch.Tensor) -> None:
    if x_src.shape != x_tgt.shape:
        raise UsageError(f"source and target batches differ in shape: {tuple(x_src.shape)} vs {tuple(x_tgt.shape)}")
    identical = (x_src == x_tgt).flatten(1).all(dim=1)
    if bool(identical.any()):
        pairs = identical.nonzero().flatten().tolist()
        raise UsageError("source and target images must differ in every pair", {"pairs": pairs})


def train_step(
    state: PCGANTrainState,
    batch: tuple[torch.Tensor, torch.Tensor],
    rng: torch.Generator,
) -> tuple[PCGANTrainState, LossRecord]:
    """One alternating update: both discriminators first, then encoder and generator on the total loss.

    A non-finite loss or parameter restores both networks and optimizers to their state before the step.
    """
    x_src, x_tgt = batch
    _check_pairs(x_src, x_tgt)
    model = state.model
    model.train()
    snapshot = _Snapshot.take(state)

    try:
        with torch.no_grad():
            src_con, src_pat = model.encode(x_src)
            tgt_con, _ = model.encode(x_tgt)
            x_rec = model.generate(src_con, src_pat)
            x_mix = model.generate(tgt_con, src_pat)

        _set_trainable(model.discriminator, True)
        _set_trainable(model.patch_discriminator, True)
        d_loss = discriminator_loss(model.discriminator, x_src, torch.cat([x_rec, x_mix]), state.r1_weight)
        d_loss = d_loss + patch_discriminator_loss(
            model.patch_discriminator, x_src, x_mix, state.sampler, rng, state.r1_weight
        )
        state.discriminator_optimizer.zero_grad(set_to_none=True)
        d_loss.backward()
        state.discriminator_optimizer.step()

        _set_trainable(model.discriminator, False)
        _set_trainable(model.patch_discriminator, False)
        components = pcgan_losses(
            model.encode, model.generate, model.discriminator, model.patch_discriminator, x_src, x_tgt, state.sampler, rng
        )
        state.generator_optimizer.zero_grad(set_to_none=True)
        components.total.backward()
        state.generator_optimizer.step()
        _check_parameters(model)
    except NumericalError:
        snapshot.restore(state)
        raise
    finally:
        _set_trainable(model.discriminator, True)
        _set_trainable(model.patch_discriminator, True)

    state.iteration += 1
    record = LossRecord(iteration=state.iteration, discriminator=float(d_loss.detach()), **components.as_floats())
    state.history.append(record)
    return state, record


def sample_pair_indices(n_images: int, batch_size: int, seed: int, iteration: int) -> tuple[np.ndarray, np.ndarray]:
    """`batch_size` ordered pairs of distinct image indices for one iteration."""
    rng = substream(seed, PAIR_STREAM, iteration)
    src = rng.integers(0, n_images, size=batch_size)
    offset = rng.integers(1, n_images, size=batch_size)
    return src, (src + offset) % n_images


def load_training_images(manifest: DatasetManifest, config: Config) -> torch.Tensor:
    samples = load_samples(manifest, workers=config.data.workers)
    faces = [prepare_face(sample, config.data.padding, config.pcgan.image_size).image for sample in samples]
    return to_tensor(faces)


def train_pcgan(
    manifest: DatasetManifest,
    context: RunContext,
    out_dir: Path,
    resume: str | Path | None = None,
    force: bool = False,
) -> tuple[PCGANTrainState, Path]:
    """Train on every ordered pair of distinct images; returns the final state and checkpoint path."""
    config = context.config
    settings = config.pcgan
    if len(manifest) < 2:
        raise DataError(f"PCGAN training needs at least 2 images, manifest {manifest.name} has {len(manifest)}")

    images = load_training_images(manifest, config)
    state = PCGANTrainState.create(settings)
    checkpoint_dir = out_dir / "checkpoints"
    if resume is not None:
        state.restore(load_checkpoint(resume, kind=CHECKPOINT_KIND, config_hash=context.config_hash, force=force))
        logger.info(f"Resuming PCGAN training at iteration {state.iteration}")
    resumed_from = [record.total for record in state.history][-settings.log_every :]
    log = CsvLog(
        out_dir / "pcgan_losses.csv",
        context.header(),
        LOSS_COLUMNS,
        resume_after=state.iteration if resume is not None else None,
    )

    final_path = checkpoint_dir / "pcgan_final.pt"
    while state.iteration < settings.iterations:
        src, tgt = sample_pair_indices(len(images), settings.batch_size, context.seed, state.iteration)
        rng = torch_generator(context.seed, CROP_STREAM, state.iteration)
        try:
            state, record = train_step(state, (images[src], images[tgt]), rng)
        except NumericalError as e:
            save_checkpoint(state.to_checkpoint(context), checkpoint_dir / "pcgan_aborted.pt")
            e.detail.setdefault("iteration", state.iteration + 1)
            raise
        log.append(record.csv_row())

        if resumed_from:
            reference = float(np.mean(resumed_from))
            jump = abs(record.total - reference) / max(abs(reference), 1e-12)
            if jump > settings.resume_tolerance:
                logger.warning(f"Loss discontinuity after resume: total {record.total:.4f} vs {reference:.4f} before")
            resumed_from = []

        if state.iteration % settings.log_every == 0:
            logger.info(
                f"PCGAN iteration {state.iteration}/{settings.iterations}: rec={record.rec:.4f} "
                f"rec_blur={record.rec_blur:.4f} adv_rec={record.adv_rec:.4f} adv_mix={record.adv_mix:.4f} "
                f"pat={record.pat:.4f} total={record.total:.4f} d={record.discriminator:.4f}"
            )
        if state.iteration % settings.checkpoint_every == 0:
            save_checkpoint(state.to_checkpoint(context), checkpoint_dir / f"pcgan_{state.iteration:06d}.pt")

    save_checkpoint(state.to_checkpoint(context), final_path)
    logger.info(f"PCGAN training finished at iteration {state.iteration}, checkpoint {final_path.as_posix()}")
    return state, final_path


def load_pcgan(
    path: str | Path,
    settings: PCGANSettings,
    config_hash: str | None = None,
    force: bool = False,
) -> PCGANModel:
    """Model weights from a checkpoint, in eval mode."""
    checkpoint = load_checkpoint(path, kind=CHECKPOINT_KIND, config_hash=config_hash, force=force)
    model = PCGANModel(settings)
    try:
        model.load_state_dict(checkpoint.state["model"])
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {Path(path).as_posix()} does not fit the configured model: {e}") from e
    return model.eval()
