from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import torch


def to_tensor(images: Sequence[np.ndarray] | np.ndarray) -> torch.Tensor:
    """Stack H×W×3 images in [0, 1] into a float32 B×3×H×W batch."""
    batch = images if isinstance(images, np.ndarray) else np.stack(list(images))
    if batch.ndim == 3:
        batch = batch[None]
    return torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2), dtype=np.float32))


def to_images(batch: torch.Tensor) -> list[np.ndarray]:
    """Inverse of `to_tensor`; values are clipped to [0, 1]."""
    array = batch.detach().to("cpu", torch.float32).clamp(0.0, 1.0).numpy()
    return [np.ascontiguousarray(image.transpose(1, 2, 0)) for image in array]
