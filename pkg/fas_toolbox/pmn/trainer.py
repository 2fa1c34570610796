from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import torch
from pydantic import BaseModel

from fas_toolbox.app import CsvLog, RunContext
from fas_toolbox.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from fas_toolbox.config import Config, PMNSettings
from fas_toolbox.datapipe.crop import extract_patch, prepare_face
from fas_toolbox.datapipe.manifest import load_samples
from fas_toolbox.datapipe.rng import substream
from fas_toolbox.datapipe.tensors import to_tensor
from fas_toolbox.datapipe.types import CropSpec, DatasetManifest, ManifestEntry, Provenance
from fas_toolbox.errors import CheckpointError, DataError, NumericalError, OutputError, ShapeError, UsageError
from fas_toolbox.eval.metrics import auc
from fas_toolbox.eval.protocol import ProtocolSpec, score_file_name
from fas_toolbox.eval.scores import ScoreSet, write_scores
from fas_toolbox.log import logger
from fas_toolbox.pmn.losses import (
    PMNLosses,
    center_loss,
    check_input,
    check_labels,
    clip_loss_from_embeddings,
    cross_entropy,
    guard_finite,
    l2_penalty,
    total_pmn_loss,
    update_centers,
)
from fas_toolbox.pmn.model import ClassCenters, PMNHeads, PMNModel
from fas_toolbox.pmn.prompts import PromptBank, embed_prompts

LOSS_COLUMNS = ("iteration", "epoch", "clip", "face", "patch", "center", "l2", "total", "accuracy")
CHECKPOINT_KIND = "pmn"

# Substream tags of the per-iteration random sources.
BATCH_STREAM = 11
PATCH_STREAM = 12


class PMNLossRecord(BaseModel):
    iteration: int
    epoch: int
    clip: float
    face: float
    patch: float
    center: float
    l2: float
    total: float
    accuracy: float

    def csv_row(self) -> list[str]:
        return [str(self.iteration), str(self.epoch), *(f"{getattr(self, name):.8g}" for name in LOSS_COLUMNS[2:])]


class PMNRunMetadata(BaseModel):
    provenance: dict[str, Any]
    protocol: str
    train_domains: list[str]
    test_domain: str
    alpha: float
    beta: float
    use_clip_loss: bool
    use_patch_loss: bool
    use_center_loss: bool
    use_synthetic: bool
    crop: CropSpec
    train: dict[str, Any]
    test: dict[str, Any]


@dataclass
class PMNTrainState:
    """Single-owner detector training state; the text encoder is frozen once the prompt means are set."""

    model: PMNModel
    optimizer: torch.optim.Optimizer
    centers: ClassCenters
    settings: PMNSettings
    iteration: int = 0
    epoch: int = 0
    history: deque[PMNLossRecord] = field(default_factory=lambda: deque(maxlen=1000))

    @classmethod
    def create(
        cls,
        settings: PMNSettings,
        model: PMNModel | None = None,
        prompts: PromptBank | None = None,
    ) -> PMNTrainState:
        model = model or PMNModel(settings)
        model.prompt_means.copy_(embed_prompts(prompts or PromptBank(), model.backbone))
        model.freeze_text_encoder()
        return cls(
            model=model,
            optimizer=torch.optim.Adam(model.trainable_parameters(), lr=settings.lr, betas=settings.betas),
            centers=ClassCenters.zeros(settings.feature_dim, settings.center_update_rate),
            settings=settings,
        )

    def to_checkpoint(self, context: RunContext) -> Checkpoint:
        return Checkpoint(
            kind=CHECKPOINT_KIND,
            config_hash=context.config_hash,
            seed=context.seed,
            revision=context.revision,
            iteration=self.iteration,
            state={"model": self.model.state_dict()},
            optimizers={"detector": self.optimizer.state_dict()},
            extra={
                "epoch": self.epoch,
                "prompt_means": self.model.prompt_means.detach().clone(),
                "centers": self.centers.centers.detach().clone(),
                "history": [record.model_dump() for record in self.history],
            },
        )

    def restore(self, checkpoint: Checkpoint) -> None:
        self.model.load_state_dict(checkpoint.state["model"])
        if checkpoint.optimizers:
            self.optimizer.load_state_dict(checkpoint.optimizers["detector"])
        self.centers = self.centers.with_centers(checkpoint.extra["centers"])
        self.iteration = checkpoint.iteration
        self.epoch = int(checkpoint.extra.get("epoch", 0))
        self.history.clear()
        self.history.extend(PMNLossRecord(**record) for record in checkpoint.extra.get("history", []))


def pmn_train_step(
    state: PMNTrainState,
    face_batch: tuple[torch.Tensor, torch.Tensor],
    patch_batch: tuple[torch.Tensor, torch.Tensor],
) -> tuple[PMNTrainState, PMNLossRecord]:
    """One optimizer step on the total detector loss, then the class-center update."""
    images, labels = face_batch
    patches, patch_labels = patch_batch
    model, settings = state.model, state.settings
    backbone, heads = model.backbone, model.heads
    check_input(images, backbone)
    check_input(patches, backbone)
    labels = check_labels(labels, images.shape[0])
    patch_labels = check_labels(patch_labels, patches.shape[0])
    model.train()

    embeddings = backbone.encode_image(images)
    features = heads.features(embeddings)
    face_logits = heads.face(features)
    zero = embeddings.new_zeros(())
    components = PMNLosses(
        clip=(
            clip_loss_from_embeddings(embeddings, labels, model.prompt_means, backbone.logit_scale)
            if settings.use_clip_loss
            else zero
        ),
        face=cross_entropy(face_logits, labels, "face loss"),
        patch=(
            cross_entropy(heads.patch(heads.features(backbone.encode_image(patches))), patch_labels, "patch loss")
            if settings.use_patch_loss
            else zero
        ),
        center=center_loss(features, labels, state.centers) if settings.use_center_loss else zero,
        l2=l2_penalty(model.trainable_parameters()),
    )
    total = guard_finite(total_pmn_loss(components, settings.alpha, settings.beta), "PMN total loss")
    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()

    for name, parameter in model.named_parameters():
        if parameter.requires_grad and not bool(torch.isfinite(parameter).all()):
            raise NumericalError(f"parameter {name} became non-finite", {"parameter": name})
    if settings.use_center_loss:
        state.centers = update_centers(state.centers, features.detach(), labels)

    state.iteration += 1
    record = PMNLossRecord(
        iteration=state.iteration,
        epoch=state.epoch + 1,
        clip=float(components.clip.detach()),
        face=float(components.face.detach()),
        patch=float(components.patch.detach()),
        center=float(components.center.detach()),
        l2=float(components.l2.detach()),
        total=float(total.detach()),
        accuracy=float((face_logits.detach().argmax(dim=1) == labels).float().mean()),
    )
    state.history.append(record)
    return state, record


@torch.no_grad()
def score_batch(images: torch.Tensor, backbone, heads: PMNHeads) -> torch.Tensor:
    """Attack probabilities of face crops from the face head alone; the patch head and text tower stay unused."""
    check_input(images, backbone)
    logits = heads.face(heads.features(backbone.encode_image(images)))
    return torch.softmax(logits, dim=1)[:, 1]


def score(image: torch.Tensor | np.ndarray, backbone, heads: PMNHeads) -> float:
    """Attack probability of one face crop, given as a 3×S×S tensor or an S×S×3 image in [0, 1].

    The caller puts the modules in eval mode; nothing here changes their state.
    """
    batch = to_tensor(image) if isinstance(image, np.ndarray) else image
    if batch.ndim == 3:
        batch = batch.unsqueeze(0)
    if batch.ndim != 4 or batch.shape[0] != 1:
        raise ShapeError(f"score() takes a single image, got shape {tuple(batch.shape)}")
    return float(score_batch(batch, backbone, heads)[0])


class FaceData(NamedTuple):
    """Face crops at the detector size plus the padded crops patches are cut from."""

    entries: list[ManifestEntry]
    faces: np.ndarray
    patch_sources: list[np.ndarray]
    labels: np.ndarray


def load_face_data(manifest: DatasetManifest, config: Config) -> FaceData:
    samples = load_samples(manifest, workers=config.data.workers)
    padding, size = config.data.padding, config.pmn.input_size
    faces = np.stack([prepare_face(sample, padding, size).image for sample in samples]).astype(np.float32)
    # Patches come from the padded face crop at its native resolution.
    sources = [prepare_face(sample, padding, min(sample.size)).image for sample in samples]
    labels = np.asarray([entry.label.index for entry in manifest.entries], dtype=np.int64)
    logger.info(f"Loaded {len(samples)} faces from {manifest.name}: {manifest.label_histogram}")
    return FaceData(list(manifest.entries), faces, sources, labels)


def sample_batch_indices(n_samples: int, batch_size: int, seed: int, iteration: int) -> np.ndarray:
    rng = substream(seed, BATCH_STREAM, iteration)
    return rng.choice(n_samples, size=batch_size, replace=batch_size > n_samples)


def make_batches(
    data: FaceData,
    indices: np.ndarray,
    crop: CropSpec,
    seed: int,
    iteration: int,
) -> tuple[tuple[torch.Tensor, torch.Tensor], tuple[torch.Tensor, torch.Tensor]]:
    """Face and patch batches over the same samples so both label vectors align."""
    labels = torch.from_numpy(data.labels[indices])
    patches = [
        extract_patch(data.patch_sources[i], crop, substream(seed, PATCH_STREAM, iteration, slot))
        for slot, i in enumerate(indices)
    ]
    return (to_tensor(data.faces[indices]), labels), (to_tensor(patches), labels.clone())


def score_faces(model: PMNModel, data: FaceData, batch_size: int = 64) -> ScoreSet:
    model.eval()
    scores: list[float] = []
    for start in range(0, len(data.entries), batch_size):
        batch = to_tensor(data.faces[start : start + batch_size])
        scores.extend(score_batch(batch, model.backbone, model.heads).tolist())
    return ScoreSet(
        scores=scores,
        labels=[entry.label for entry in data.entries],
        paths=[entry.path for entry in data.entries],
        domains=[entry.domain_id for entry in data.entries],
    )


def crop_spec(config: Config) -> CropSpec:
    crop = config.crop
    if crop.output_size != config.pmn.input_size:
        raise UsageError(f"crop.output_size {crop.output_size} must equal pmn.input_size {config.pmn.input_size}")
    return CropSpec(strategy=crop.strategy, scale_min=crop.scale_min, scale_max=crop.scale_max, output_size=crop.output_size)


def split_protocol(manifest: DatasetManifest, spec: ProtocolSpec, use_synthetic: bool = True) -> tuple[DatasetManifest, DatasetManifest]:
    """Training set over the source domains and the original test-domain samples."""
    train = manifest.filter(domains=set(spec.train_domains), name=f"{manifest.name}-train")
    if not use_synthetic:
        train = train.filter(provenance=Provenance.original)
    test = manifest.filter(domains={spec.test_domain}, provenance=Provenance.original, name=f"{manifest.name}-test")
    if len(train) == 0:
        raise DataError(f"no training samples for domains {sorted(spec.train_domains)} in {manifest.name}")
    if len(test) == 0:
        raise DataError(f"no test samples for domain {spec.test_domain} in {manifest.name}")
    return train, test


def train_pmn(
    manifest: DatasetManifest,
    spec: ProtocolSpec,
    context: RunContext,
    out_dir: Path,
    resume: str | Path | None = None,
    force: bool = False,
) -> tuple[PMNTrainState, Path]:
    """Train on the protocol's source domains and write one test-domain score file per epoch."""
    config = context.config
    settings = config.pmn
    crop = crop_spec(config)
    train_manifest, test_manifest = split_protocol(manifest, spec, settings.use_synthetic)
    train_data = load_face_data(train_manifest, config)
    test_data = load_face_data(test_manifest, config)

    metadata = PMNRunMetadata(
        provenance=context.provenance(),
        protocol=spec.name,
        train_domains=sorted(spec.train_domains),
        test_domain=spec.test_domain,
        alpha=settings.alpha,
        beta=settings.beta,
        use_clip_loss=settings.use_clip_loss,
        use_patch_loss=settings.use_patch_loss,
        use_center_loss=settings.use_center_loss,
        use_synthetic=settings.use_synthetic,
        crop=crop,
        train=train_manifest.metadata,
        test=test_manifest.metadata,
    )
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "pmn_run.json").write_text(metadata.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Failed to write run metadata in {out_dir.as_posix()}: {e}") from e

    state = PMNTrainState.create(settings)
    checkpoint_dir = out_dir / "checkpoints"
    score_dir = out_dir / "scores"
    if resume is not None:
        state.restore(load_checkpoint(resume, kind=CHECKPOINT_KIND, config_hash=context.config_hash, force=force))
        logger.info(f"Resuming PMN training after epoch {state.epoch} (iteration {state.iteration})")
    log = CsvLog(
        out_dir / "pmn_losses.csv",
        context.header(),
        LOSS_COLUMNS,
        resume_after=state.iteration if resume is not None else None,
    )

    for epoch in range(state.epoch + 1, settings.epochs + 1):
        for _ in range(settings.steps_per_epoch):
            indices = sample_batch_indices(len(train_data.entries), settings.batch_size, context.seed, state.iteration)
            face_batch, patch_batch = make_batches(train_data, indices, crop, context.seed, state.iteration)
            try:
                state, record = pmn_train_step(state, face_batch, patch_batch)
            except NumericalError as e:
                save_checkpoint(state.to_checkpoint(context), checkpoint_dir / "pmn_aborted.pt")
                e.detail.setdefault("iteration", state.iteration + 1)
                raise
            log.append(record.csv_row())
            if state.iteration % settings.log_every == 0:
                logger.info(
                    f"PMN iteration {state.iteration} (epoch {epoch}/{settings.epochs}): clip={record.clip:.4f} "
                    f"face={record.face:.4f} patch={record.patch:.4f} center={record.center:.4f} "
                    f"l2={record.l2:.1f} total={record.total:.4f} acc={record.accuracy:.3f}"
                )

        state.epoch = epoch
        scores = score_faces(state.model, test_data)
        write_scores(scores, score_dir / score_file_name(epoch), context.header())
        save_checkpoint(state.to_checkpoint(context), checkpoint_dir / "pmn_last.pt")
        n_attack = int(scores.attack_mask.sum())
        if 0 < n_attack < len(scores):
            logger.info(f"PMN epoch {epoch}: test-domain {spec.test_domain} AUC {auc(scores):.4f}")

    final_path = save_checkpoint(state.to_checkpoint(context), checkpoint_dir / "pmn_final.pt")
    logger.info(f"PMN training finished after epoch {state.epoch}, checkpoint {final_path.as_posix()}")
    return state, final_path


def load_pmn(
    path: str | Path,
    settings: PMNSettings,
    config_hash: str | None = None,
    force: bool = False,
) -> PMNModel:
    """Detector weights, prompt means included, in eval mode."""
    checkpoint = load_checkpoint(path, kind=CHECKPOINT_KIND, config_hash=config_hash, force=force)
    model = PMNModel(settings)
    try:
        model.load_state_dict(checkpoint.state["model"])
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {Path(path).as_posix()} does not fit the configured model: {e}") from e
    return model.eval()
