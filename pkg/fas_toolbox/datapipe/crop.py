"""Face cropping and patch extraction."""

from __future__ import annotations

from typing import NamedTuple

import cv2
import numpy as np

from fas_toolbox.datapipe.types import BBox, CropSpec, FaceSample
from fas_toolbox.errors import CropError, GeometryError, PreconditionError, UsageError

MIN_PATCH_SIDE = 8


class Region(NamedTuple):
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


class PatchWindow(NamedTuple):
    top: int
    left: int
    side: int


def resize(image: np.ndarray, size: int) -> np.ndarray:
    """Resize an H×W×3 image to size×size; identity when already that size."""
    height, width = image.shape[:2]
    if height == size and width == size:
        return image.astype(np.float32, copy=True)
    interpolation = cv2.INTER_AREA if size < min(height, width) else cv2.INTER_LINEAR
    resized = cv2.resize(image.astype(np.float32), (size, size), interpolation=interpolation)
    return np.clip(resized, 0.0, 1.0)


def padded_region(bbox: BBox, padding: float) -> Region:
    """Bbox expanded by padding×max(w, h) per side, squared around its center, before clipping."""
    x, y, w, h = bbox
    pad = padding * max(w, h)
    x0, y0, x1, y1 = x - pad, y - pad, x + w + pad, y + h + pad
    side = max(x1 - x0, y1 - y0)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    return Region(
        int(round(cx - side / 2)),
        int(round(cy - side / 2)),
        int(round(cx + side / 2)),
        int(round(cy + side / 2)),
    )


def clip_region(region: Region, height: int, width: int) -> Region:
    """Move a square region inside the image, shrinking it to the shorter image side if needed.

    The result stays square so the later resize never stretches one axis.
    """
    if region.x1 <= 0 or region.y1 <= 0 or region.x0 >= width or region.y0 >= height:
        raise GeometryError(f"crop region {tuple(region)} lies outside the {width}×{height} image")
    side = min(region.width, region.height, height, width)
    cx, cy = (region.x0 + region.x1) / 2, (region.y0 + region.y1) / 2
    x0 = min(max(int(round(cx - side / 2)), 0), width - side)
    y0 = min(max(int(round(cy - side / 2)), 0), height - side)
    return Region(x0, y0, x0 + side, y0 + side)


def crop_face(sample: FaceSample, padding: float, output_size: int = 224) -> FaceSample:
    if sample.bbox is None:
        raise PreconditionError(f"sample {sample.path or '<memory>'} has no bounding box")
    if padding < 0:
        raise UsageError(f"padding must be non-negative, got {padding}")

    height, width = sample.size
    region = clip_region(padded_region(sample.bbox, padding), height, width)
    assert 0 <= region.x0 < region.x1 <= width and 0 <= region.y0 < region.y1 <= height  # noqa: S101

    face = resize(sample.image[region.y0 : region.y1, region.x0 : region.x1], output_size)
    return sample.model_copy(update={"image": face, "bbox": None})


def prepare_face(sample: FaceSample, padding: float, output_size: int) -> FaceSample:
    """Face crop when a bbox is known, plain resize for images that are already face crops."""
    if sample.bbox is not None:
        return crop_face(sample, padding, output_size)
    return sample.model_copy(update={"image": resize(sample.image, output_size)})


def sample_patch_window(height: int, width: int, spec: CropSpec, rng: np.random.Generator) -> PatchWindow:
    scale = float(rng.uniform(spec.scale_min, spec.scale_max))
    side = int(round(scale * min(height, width)))
    if side < MIN_PATCH_SIDE:
        raise CropError(f"patch side {side}px below the {MIN_PATCH_SIDE}px minimum (scale {scale:.3f})")
    side = min(side, height, width)

    if spec.strategy == "random":
        top = int(rng.integers(0, height - side + 1))
        left = int(rng.integers(0, width - side + 1))
    elif spec.strategy == "center":
        top, left = (height - side) // 2, (width - side) // 2
    else:
        top, left = 0, 0
    return PatchWindow(top, left, side)


def extract_patch(image: np.ndarray, spec: CropSpec, rng: np.random.Generator) -> np.ndarray:
    height, width = image.shape[:2]
    window = sample_patch_window(height, width, spec, rng)
    patch = image[window.top : window.top + window.side, window.left : window.left + window.side]
    return resize(patch, spec.output_size)
