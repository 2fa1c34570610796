"""Tests for Hough line detection and figure output."""

import csv

import numpy as np
import pytest

from fas_toolbox.artifactviz.figure import (
    Panel,
    emit_figure,
    normalize_map,
    panel_pixels,
    write_artifact_figures,
)
from fas_toolbox.artifactviz.lines import Line, LineSet, detect_lines, hough_accumulator, lines_for, to_uint8
from fas_toolbox.config import VizSettings
from fas_toolbox.errors import UsageError


def _stripes(size: int = 64, width: int = 4) -> np.ndarray:
    columns = (np.arange(size) // width) % 2
    return np.repeat(np.tile(columns.astype(np.float64), (size, 1))[..., None], 3, axis=2)


def test_stripes_give_vertical_lines():
    """Test vertical bars produce at least five lines within 2 degrees of vertical."""
    lines = detect_lines(_stripes())
    near_vertical = [line for line in lines.segments if min(line.theta, np.pi - line.theta) <= np.deg2rad(2.0)]
    assert len(near_vertical) >= 5
    assert lines.source_size == (64, 64)
    assert lines.parameters["hough_threshold"] == 26


def test_blank_image_has_no_lines():
    """Test an empty edge map gives an empty line set."""
    lines = detect_lines(np.full((32, 32, 3), 0.5))
    assert len(lines) == 0
    assert lines.segments == []


def test_detect_lines_validation():
    """Test Canny and vote thresholds are checked."""
    image = _stripes(16)
    with pytest.raises(UsageError):
        detect_lines(image, canny_low=0.0)
    with pytest.raises(UsageError):
        detect_lines(image, canny_low=200.0, canny_high=100.0)
    with pytest.raises(UsageError):
        detect_lines(image, hough_threshold=-1)


def test_hough_accumulator_single_column():
    """Test one vertical edge column votes fully into rho = x at theta 0."""
    edges = np.zeros((10, 10), dtype=np.uint8)
    edges[:, 3] = 255
    accumulator, rhos, thetas = hough_accumulator(edges)
    assert thetas[0] == 0.0
    assert accumulator.max() == 10
    r = int(np.argmax(accumulator[:, 0]))
    assert accumulator[r, 0] == 10
    assert rhos[r] == pytest.approx(3.0, abs=0.5)


def test_line_set_sorted_and_written(tmp_path):
    """Test lines are ordered by votes and serialized to CSV."""
    lines = LineSet(
        segments=[Line(rho=1.0, theta=0.5, votes=3), Line(rho=2.0, theta=0.1, votes=9)],
        source_size=(8, 8),
    )
    assert [line.votes for line in lines.segments] == [9, 3]
    path = lines.to_csv(tmp_path / "lines.csv")
    rows = list(csv.reader(path.read_text(encoding="utf-8").splitlines()))
    assert rows == [["rho", "theta", "votes"], ["2", "0.1", "9"], ["1", "0.5", "3"]]


def test_to_uint8():
    """Test float RGB and uint8 inputs."""
    assert to_uint8(np.ones((2, 2, 3))).tolist() == [[255, 255], [255, 255]]
    gray = np.full((2, 2), 7, dtype=np.uint8)
    assert to_uint8(gray) is gray or np.array_equal(to_uint8(gray), gray)


def test_lines_for_scales_threshold():
    """Test the configured vote fraction applies to the shorter side."""
    lines = lines_for(_stripes(32), VizSettings(hough_threshold_frac=0.5))
    assert lines.parameters["hough_threshold"] == 16


def test_normalize_map():
    """Test the maximum maps to one and all-zero maps stay zero."""
    values = normalize_map(np.array([[0.0, 2.0], [1.0, 4.0]]))
    assert values.max() == 1.0
    assert values[0, 1] == 0.5
    assert np.array_equal(normalize_map(np.zeros((2, 2))), np.zeros((2, 2)))
    with pytest.raises(UsageError):
        panel_pixels(np.zeros((2, 2, 4)))


def test_emit_figure_deterministic(tmp_path):
    """Test identical panels render identical PNG bytes."""
    panels = [("stripes", _stripes(32)), Panel("map", np.arange(16.0).reshape(4, 4))]
    first = emit_figure(panels, tmp_path / "a.png")
    second = emit_figure(panels, tmp_path / "b.png")
    assert first.read_bytes() == second.read_bytes()
    with pytest.raises(UsageError):
        emit_figure([], tmp_path / "c.png")


def test_write_artifact_figures(tmp_path):
    """Test the overlay figure, the Sobel figure and one CSV per image."""
    images = {"live": np.full((32, 32, 3), 0.5), "attack": _stripes(32)}
    result = write_artifact_figures(images, VizSettings(), tmp_path / "viz" / "pair_000")
    assert (tmp_path / "viz" / "pair_000.png").is_file()
    assert (tmp_path / "viz" / "pair_000_sobel.png").is_file()
    assert (tmp_path / "viz" / "pair_000_live_lines.csv").is_file()
    assert (tmp_path / "viz" / "pair_000_attack_lines.csv").is_file()
    assert result["lines"]["live"] == 0
    assert result["lines"]["attack"] > 0
