"""Tests for Sobel maps and the overlay band-energy oracle."""

import numpy as np
import pytest

from fas_toolbox.artifactviz.sobel import (
    band_energy,
    overlay_band_energy,
    peak_frequency,
    radial_frequency,
    sobel_magnitude,
    to_grayscale,
)
from fas_toolbox.datapipe.synthetic import overlay_pattern
from fas_toolbox.errors import UsageError


def _ramp(size: int = 64) -> np.ndarray:
    xx = np.mgrid[0:size, 0:size][1] / size
    return np.repeat((0.3 + 0.4 * xx)[..., None], 3, axis=2)


def test_sobel_step_edge():
    """Test a unit step gives a peak magnitude of 4."""
    step = np.zeros((16, 16))
    step[:, 8:] = 1.0
    magnitude = sobel_magnitude(step)
    assert magnitude.max() == pytest.approx(4.0)
    assert magnitude[:, :6].max() == 0.0


def test_sobel_input_checks():
    """Test RGB input needs explicit conversion."""
    rgb = np.full((8, 8, 3), 0.5)
    with pytest.raises(UsageError):
        sobel_magnitude(rgb)
    assert np.array_equal(sobel_magnitude(rgb, convert=True), np.zeros((8, 8)))
    with pytest.raises(UsageError):
        to_grayscale(np.zeros((4, 4, 2)))


def test_grayscale_weights():
    """Test luminance weights sum to one."""
    assert to_grayscale(np.ones((2, 2, 3))) == pytest.approx(np.ones((2, 2)))
    assert to_grayscale(np.zeros((2, 2))).shape == (2, 2)


def test_radial_frequency_grid():
    """Test the DC bin and the Nyquist corner."""
    radius = radial_frequency((8, 8))
    assert radius[0, 0] == 0.0
    assert radius[4, 4] == pytest.approx(np.hypot(0.5, 0.5))


def test_overlay_energy_far_above_smooth_base():
    """Test a sinusoidal overlay raises band energy by at least 10× over a smooth ramp."""
    base = _ramp()
    overlay = base + overlay_pattern(64, 0.35, 30.0, 0.1)[..., None]
    assert overlay_band_energy(overlay, 0.35) >= 10.0 * overlay_band_energy(base, 0.35)


def test_band_energy_grows_with_amplitude():
    """Test doubling the overlay amplitude raises band energy."""
    base = _ramp()
    energies = [
        overlay_band_energy(base + overlay_pattern(64, 0.35, 30.0, amplitude)[..., None], 0.35)
        for amplitude in (0.025, 0.05, 0.1)
    ]
    assert energies[0] < energies[1] < energies[2]


def test_band_energy_of_flat_map():
    """Test a constant map has no band energy."""
    assert band_energy(np.full((32, 32), 3.0), 0.3) == 0.0


def test_peak_frequency_of_pattern():
    """Test the dominant bin of an on-grid sinusoid."""
    frequency, orientation = peak_frequency(overlay_pattern(64, 0.25, 0.0, 0.1))
    assert frequency == pytest.approx(0.25)
    assert orientation == pytest.approx(0.0)

    frequency, orientation = peak_frequency(overlay_pattern(64, 0.25, 90.0, 0.1))
    assert frequency == pytest.approx(0.25)
    assert orientation == pytest.approx(90.0)
