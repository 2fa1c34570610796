"""Versioned checkpoint archives shared by the conversion GAN and the detector."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import torch
from pydantic import BaseModel, Field

from fas_toolbox.errors import CheckpointError, OutputError
from fas_toolbox.log import logger

FORMAT = "fas-toolbox-checkpoint"
VERSION = 1


class Checkpoint(BaseModel):
    kind: str = Field(description="Which model family the archive holds, e.g. 'pcgan' or 'pmn'")
    config_hash: str
    seed: int
    revision: str
    iteration: int = 0
    state: dict[str, Any] = Field(default_factory=dict, description="Named module state dicts")
    optimizers: dict[str, Any] = Field(default_factory=dict)
    extra: dict[str, Any] = Field(default_factory=dict)


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    checkpoint_path = Path(path)
    archive = {"format": FORMAT, "version": VERSION, **checkpoint.model_dump()}
    tmp_path = checkpoint_path.with_suffix(checkpoint_path.suffix + ".tmp")
    try:
        checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(archive, tmp_path)
        tmp_path.replace(checkpoint_path)
    except OSError as e:
        raise OutputError(f"Failed to write checkpoint {checkpoint_path.as_posix()}: {e}") from e
    logger.debug(f"Saved {checkpoint.kind} checkpoint at iteration {checkpoint.iteration} to {checkpoint_path.as_posix()}")
    return checkpoint_path


def load_checkpoint(
    path: str | Path,
    *,
    kind: str | None = None,
    config_hash: str | None = None,
    force: bool = False,
) -> Checkpoint:
    """Read an archive; refuses a different model kind, and a different config hash unless `force`."""
    checkpoint_path = Path(path).expanduser()
    if not checkpoint_path.is_file():
        raise CheckpointError(f"Checkpoint not found: {checkpoint_path.as_posix()}")
    try:
        archive = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Failed to read checkpoint {checkpoint_path.as_posix()}: {e}") from e

    if not isinstance(archive, dict) or archive.get("format") != FORMAT:
        raise CheckpointError(f"{checkpoint_path.as_posix()} is not a fas-toolbox checkpoint")
    if archive.get("version") != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {archive.get('version')}, expected {VERSION}")

    archive.pop("format")
    archive.pop("version")
    checkpoint = Checkpoint(**archive)
    if kind is not None and checkpoint.kind != kind:
        raise CheckpointError(f"Expected a {kind} checkpoint, got {checkpoint.kind}")
    if config_hash is not None and checkpoint.config_hash != config_hash:
        detail = {"checkpoint": checkpoint.config_hash, "config": config_hash}
        if not force:
            raise CheckpointError("Checkpoint config hash does not match the current configuration", detail)
        logger.warning(f"Loading checkpoint despite config hash mismatch: {detail}")
    return checkpoint
