"""Run-level wiring shared by every command: config, seeding and provenance."""

from __future__ import annotations

import csv
import random
import shutil
import subprocess
from collections.abc import Sequence
from functools import cache
from pathlib import Path
from typing import Any

import numpy as np
import torch

from fas_toolbox import __version__
from fas_toolbox.config import Config
from fas_toolbox.errors import OutputError
from fas_toolbox.log import logger


@cache
def revision() -> str:
    """Git-style revision string of the running code, falling back to the package version."""
    git = shutil.which("git")
    if git:
        try:
            result = subprocess.run(  # noqa: S603
                [git, "rev-parse", "--short=12", "HEAD"],
                cwd=Path(__file__).parent,
                capture_output=True,
                text=True,
                timeout=5,
                check=False,
            )
        except (OSError, subprocess.SubprocessError):
            result = None
        if result is not None and result.returncode == 0 and result.stdout.strip():
            return result.stdout.strip()
    return f"v{__version__}"


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


class RunContext:
    """Everything a command needs to produce reproducible, self-describing outputs."""

    def __init__(self, config: Config):
        self.config = config
        self.seed = config.seed
        self.config_hash = config.config_hash()
        self.revision = revision()

    @classmethod
    def create(cls, config: Config) -> RunContext:
        seed_everything(config.seed)
        context = cls(config)
        logger.info(
            f"Run context ready: profile={config.profile} seed={context.seed} "
            f"config_hash={context.config_hash} revision={context.revision}"
        )
        return context

    @property
    def output_dir(self) -> Path:
        return self.config.output_dir

    def provenance(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "revision": self.revision,
            "profile": self.config.profile,
            "pcgan_lr": self.config.pcgan.lr,
            "pmn_lr": self.config.pmn.lr,
        }

    def header(self) -> str:
        """One comment line embedded at the top of every text artifact."""
        return "# fas-toolbox " + " ".join(f"{key}={value}" for key, value in self.provenance().items())


class CsvLog:
    """Append-only CSV with the run header line followed by a column row.

    Rows start with the iteration. On resume, rows after `resume_after` are dropped before appending.
    """

    def __init__(self, path: Path, header: str, columns: Sequence[str], resume_after: int | None = None):
        self.path = path
        self.columns = tuple(columns)
        if resume_after is not None and path.is_file():
            self._truncate(resume_after)
            return
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="", encoding="utf-8") as f:
                f.write(header + "\n")
                csv.writer(f, lineterminator="\n").writerow(self.columns)
        except OSError as e:
            raise OutputError(f"Failed to create log {path.as_posix()}: {e}") from e

    def _truncate(self, last_iteration: int) -> None:
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines(keepends=True)
            rows = [line for line in lines[2:] if line.strip() and int(line.split(",", 1)[0]) <= last_iteration]
            with self.path.open("w", newline="", encoding="utf-8") as f:
                f.writelines([*lines[:2], *rows])
        except (OSError, ValueError) as e:
            raise OutputError(f"Failed to resume log {self.path.as_posix()}: {e}") from e
        if len(rows) < len(lines) - 2:
            logger.info(f"Dropped {len(lines) - 2 - len(rows)} log rows after iteration {last_iteration}")

    def append(self, row: Sequence[str]) -> None:
        with self.path.open("a", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow(row)
