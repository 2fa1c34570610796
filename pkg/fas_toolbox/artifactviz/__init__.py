"""Artifact-pattern analysis: Sobel magnitude maps, Canny+Hough line sets and figure panels."""

from fas_toolbox.artifactviz.figure import Panel, emit_figure, write_artifact_figures
from fas_toolbox.artifactviz.lines import Line, LineSet, detect_lines, lines_for
from fas_toolbox.artifactviz.sobel import band_energy, overlay_band_energy, sobel_magnitude, to_grayscale

__all__ = [
    "Line",
    "LineSet",
    "Panel",
    "band_energy",
    "detect_lines",
    "emit_figure",
    "lines_for",
    "overlay_band_energy",
    "sobel_magnitude",
    "to_grayscale",
    "write_artifact_figures",
]
