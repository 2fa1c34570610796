from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from fas_toolbox.artifactviz.lines import LineSet, lines_for
from fas_toolbox.artifactviz.sobel import sobel_magnitude
from fas_toolbox.config import VizSettings
from fas_toolbox.errors import OutputError, UsageError

PANEL_INCHES = 2.5
DPI = 100


class Panel(NamedTuple):
    title: str
    data: np.ndarray
    lines: LineSet | None = None


def normalize_map(values: np.ndarray) -> np.ndarray:
    """Scale a non-negative map so its maximum renders white; all-zero maps stay black."""
    values = np.asarray(values, dtype=np.float64)
    peak = float(values.max()) if values.size else 0.0
    return values / peak if peak > 0 else np.zeros_like(values)


def panel_pixels(data: np.ndarray) -> np.ndarray:
    """What a panel displays: RGB images in [0, 1] as they are, 2-D maps normalized to [0, 1]."""
    data = np.asarray(data)
    if data.ndim == 3 and data.shape[2] == 3:
        return np.clip(data.astype(np.float64), 0.0, 1.0)
    if data.ndim == 2:
        return normalize_map(data)
    raise UsageError(f"panel data must be H×W or H×W×3, got shape {data.shape}")


def _draw_lines(axis, lines: LineSet) -> None:
    height, width = lines.source_size
    length = float(np.hypot(height, width))
    for line in lines.segments:
        cos_t, sin_t = np.cos(line.theta), np.sin(line.theta)
        x0, y0 = line.rho * cos_t, line.rho * sin_t
        axis.plot(
            [x0 - length * sin_t, x0 + length * sin_t],
            [y0 + length * cos_t, y0 - length * cos_t],
            color="red",
            linewidth=0.6,
        )
    axis.set_xlim(-0.5, width - 0.5)
    axis.set_ylim(height - 0.5, -0.5)


def emit_figure(panels: Sequence[Panel | tuple[str, np.ndarray]], path: str | Path) -> Path:
    """Lay panels out left to right with their titles and write a PNG."""
    if not panels:
        raise UsageError("emit_figure needs at least one panel")
    panels = [panel if isinstance(panel, Panel) else Panel(*panel) for panel in panels]

    figure = Figure(figsize=(PANEL_INCHES * len(panels), PANEL_INCHES + 0.4), dpi=DPI)
    FigureCanvasAgg(figure)
    axes = figure.subplots(1, len(panels), squeeze=False)[0]
    for axis, panel in zip(axes, panels, strict=True):
        pixels = panel_pixels(panel.data)
        axis.imshow(pixels, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
        if panel.lines is not None:
            _draw_lines(axis, panel.lines)
        axis.set_title(panel.title, fontsize=9)
        axis.set_axis_off()
    figure.tight_layout()

    figure_path = Path(path)
    try:
        figure_path.parent.mkdir(parents=True, exist_ok=True)
        figure.savefig(figure_path, format="png", metadata={"Software": None})
    except OSError as e:
        raise OutputError(f"Failed to write figure {figure_path.as_posix()}: {e}") from e
    return figure_path


def write_artifact_figures(images: Mapping[str, np.ndarray], settings: VizSettings, prefix: str | Path) -> dict[str, Any]:
    """Line-overlay and Sobel panel figures of named RGB images, plus one line CSV per image.

    Files are `<prefix>.png`, `<prefix>_sobel.png` and `<prefix>_<name>_lines.csv`.
    """
    prefix = Path(prefix)
    line_sets = {name: lines_for(image, settings) for name, image in images.items()}
    figure = emit_figure(
        [Panel(f"{name} ({len(line_sets[name])} lines)", image, line_sets[name]) for name, image in images.items()],
        prefix.with_name(prefix.name + ".png"),
    )
    sobel = emit_figure(
        [Panel(f"{name} Sobel", sobel_magnitude(image, convert=True)) for name, image in images.items()],
        prefix.with_name(prefix.name + "_sobel.png"),
    )
    for name, lines in line_sets.items():
        lines.to_csv(prefix.with_name(f"{prefix.name}_{name}_lines.csv"))
    return {
        "figure": figure.as_posix(),
        "sobel": sobel.as_posix(),
        "lines": {name: len(lines) for name, lines in line_sets.items()},
    }
