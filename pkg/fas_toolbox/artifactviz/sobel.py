"""Sobel gradient magnitude maps and the overlay band-energy oracle."""

from __future__ import annotations

import cv2
import numpy as np

from fas_toolbox.errors import UsageError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """ITU-R 601 luminance of an H×W×3 image; 2-D input passes through."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ LUMA_WEIGHTS
    raise UsageError(f"expected H×W or H×W×3 image, got shape {image.shape}")


def sobel_magnitude(image: np.ndarray, convert: bool = False) -> np.ndarray:
    """√(Gx² + Gy²) with 3×3 Sobel kernels and replicated borders."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if not convert:
            raise UsageError("sobel_magnitude expects a single-channel image; pass convert=True for RGB input")
        image = to_grayscale(image)
    elif image.ndim != 2:
        raise UsageError(f"expected a 2-D image, got shape {image.shape}")

    gx = cv2.Sobel(image, cv2.CV_64F, 1, 0, ksize=3, borderType=cv2.BORDER_REPLICATE)
    gy = cv2.Sobel(image, cv2.CV_64F, 0, 1, ksize=3, borderType=cv2.BORDER_REPLICATE)
    return np.sqrt(gx**2 + gy**2)


def radial_frequency(shape: tuple[int, int]) -> np.ndarray:
    """Radial frequency in cycles per pixel of every bin of an unshifted 2-D FFT."""
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    return np.sqrt(fx**2 + fy**2)


def band_energy(magnitude: np.ndarray, frequency: float, rel_width: float = 0.15) -> float:
    """Spectral energy of a map in the annulus |r - frequency| <= rel_width·frequency.

    The map is mean-centred and Hann-windowed before the FFT to keep border leakage out of the band.
    """
    magnitude = np.asarray(magnitude, dtype=np.float64)
    window = np.outer(np.hanning(magnitude.shape[0]), np.hanning(magnitude.shape[1]))
    spectrum = np.abs(np.fft.fft2((magnitude - magnitude.mean()) * window)) ** 2
    radius = radial_frequency(magnitude.shape)
    band = np.abs(radius - frequency) <= rel_width * frequency
    return float(spectrum[band].sum())


def overlay_band_energy(image: np.ndarray, frequency: float, rel_width: float = 0.15) -> float:
    """Band energy of the Sobel magnitude map of an image at a given overlay frequency."""
    return band_energy(sobel_magnitude(image, convert=True), frequency, rel_width)


def peak_frequency(image: np.ndarray) -> tuple[float, float]:
    """(radial frequency, orientation in degrees) of the strongest non-DC spectral bin."""
    image = np.asarray(image, dtype=np.float64)
    spectrum = np.abs(np.fft.fft2(image - image.mean())) ** 2
    iy, ix = np.unravel_index(int(np.argmax(spectrum)), spectrum.shape)
    fy = np.fft.fftfreq(image.shape[0])[iy]
    fx = np.fft.fftfreq(image.shape[1])[ix]
    return float(np.hypot(fx, fy)), float(np.rad2deg(np.arctan2(fy, fx)) % 180.0)
