"""Canny edges followed by a ρ–θ Hough accumulator.

OpenCV's `HoughLines` returns no vote counts, so the accumulator is built with numpy over the
Canny edge map and its peaks are picked with a 3×3 non-maximum suppression.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Annotated, Any

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from fas_toolbox.artifactviz.sobel import to_grayscale
from fas_toolbox.config import VizSettings
from fas_toolbox.errors import OutputError, UsageError


class Line(BaseModel):
    model_config = ConfigDict(frozen=True)

    rho: Annotated[float, Field(description="Signed distance from the top-left corner in pixels")]
    theta: Annotated[float, Field(ge=0.0, lt=np.pi, description="Normal angle in radians")]
    votes: Annotated[int, Field(ge=0)]


class LineSet(BaseModel):
    segments: list[Line] = Field(default_factory=list)
    source_size: tuple[int, int]
    parameters: dict[str, Any] = Field(default_factory=dict, description="Detector settings the set was produced with")

    @field_validator("segments")
    @classmethod
    def _sorted_by_votes(cls, segments: list[Line]) -> list[Line]:
        return sorted(segments, key=lambda line: (-line.votes, line.theta, line.rho))

    def __len__(self) -> int:
        return len(self.segments)

    def to_csv(self, path: str | Path) -> Path:
        csv_path = Path(path)
        try:
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            with csv_path.open("w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["rho", "theta", "votes"])
                for line in self.segments:
                    writer.writerow([f"{line.rho:.6g}", f"{line.theta:.6g}", line.votes])
        except OSError as e:
            raise OutputError(f"Failed to write line set {csv_path.as_posix()}: {e}") from e
        return csv_path


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Grayscale 8-bit view of an image given in [0, 1] floats or already as uint8."""
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return cv2.cvtColor(image, cv2.COLOR_RGB2GRAY) if image.ndim == 3 else image
    gray = to_grayscale(image)
    return np.clip(np.rint(gray * 255.0), 0, 255).astype(np.uint8)


def hough_accumulator(
    edges: np.ndarray,
    rho_resolution: float = 1.0,
    theta_resolution: float = np.pi / 180,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vote every edge pixel into (ρ, θ) bins; returns (accumulator, rho bin centres, thetas)."""
    height, width = edges.shape
    diagonal = float(np.hypot(height, width))
    thetas = np.arange(0.0, np.pi, theta_resolution)
    rhos = np.arange(-diagonal, diagonal + rho_resolution, rho_resolution)
    accumulator = np.zeros((len(rhos), len(thetas)), dtype=np.int64)

    ys, xs = np.nonzero(edges)
    if len(xs) == 0:
        return accumulator, rhos, thetas
    rho_values = xs[:, None] * np.cos(thetas)[None, :] + ys[:, None] * np.sin(thetas)[None, :]
    rho_index = np.rint((rho_values + diagonal) / rho_resolution).astype(np.int64)
    theta_index = np.broadcast_to(np.arange(len(thetas)), rho_index.shape)
    np.add.at(accumulator, (rho_index.ravel(), theta_index.ravel()), 1)
    return accumulator, rhos, thetas


def accumulator_peaks(accumulator: np.ndarray, threshold: int) -> list[tuple[int, int]]:
    """(ρ index, θ index) of 3×3 local maxima with at least `threshold` votes."""
    votes = accumulator.astype(np.float32)
    dilated = cv2.dilate(votes, np.ones((3, 3), np.uint8))
    mask = (votes >= threshold) & (votes == dilated)
    return [(int(r), int(t)) for r, t in zip(*np.nonzero(mask), strict=True)]


def detect_lines(
    image: np.ndarray,
    canny_low: float = 50.0,
    canny_high: float = 150.0,
    hough_threshold: int | None = None,
    rho_resolution: float = 1.0,
    theta_resolution_deg: float = 1.0,
) -> LineSet:
    """Canny edge map of `image`, then the ρ–θ Hough peaks above `hough_threshold` votes.

    `hough_threshold` defaults to 0.4 × the image side.
    """
    if canny_low <= 0 or canny_high <= 0:
        raise UsageError(f"Canny thresholds must be positive, got ({canny_low}, {canny_high})")
    if canny_low >= canny_high:
        raise UsageError(f"canny_low must be below canny_high, got ({canny_low}, {canny_high})")

    gray = to_uint8(image)
    height, width = gray.shape
    if hough_threshold is None:
        hough_threshold = max(int(round(0.4 * min(height, width))), 1)
    if hough_threshold <= 0:
        raise UsageError(f"hough_threshold must be positive, got {hough_threshold}")

    edges = cv2.Canny(gray, canny_low, canny_high)
    accumulator, rhos, thetas = hough_accumulator(edges, rho_resolution, np.deg2rad(theta_resolution_deg))
    segments = [
        Line(rho=float(rhos[r]), theta=float(thetas[t]), votes=int(accumulator[r, t]))
        for r, t in accumulator_peaks(accumulator, hough_threshold)
    ]
    return LineSet(
        segments=segments,
        source_size=(height, width),
        parameters={
            "canny_low": canny_low,
            "canny_high": canny_high,
            "hough_threshold": hough_threshold,
            "rho_resolution": rho_resolution,
            "theta_resolution_deg": theta_resolution_deg,
        },
    )


def lines_for(image: np.ndarray, settings: VizSettings) -> LineSet:
    """`detect_lines` with the configured detector settings; the vote threshold scales with the image side."""
    side = min(np.asarray(image).shape[:2])
    return detect_lines(
        image,
        settings.canny_low,
        settings.canny_high,
        hough_threshold=max(int(round(settings.hough_threshold_frac * side)), 1),
        rho_resolution=settings.rho_resolution,
        theta_resolution_deg=settings.theta_resolution_deg,
    )
