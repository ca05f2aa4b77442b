"""Boundary distribution smoothing: continuous soft labels from binary masks.

Binary ground truth is convolved with a truncated, normalized Gaussian
kernel. Because the mask is piecewise constant, only pixels within one
kernel radius of a foreground/background boundary change; everything else
keeps its hard 0/1 value. Multiple kernel widths produce an augmented label
set for training. A uniform-band smoother is included as the flat-value
baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .maps import BinaryMask, SoftLabelMap

SIGMA_MAX = 5.0

# Coarse coverage of the admissible (0, 5] width range.
DEFAULT_SIGMAS = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Truncated 2-D Gaussian, normalized to unit sum.

    radius = ceil(3*sigma); weights has shape (2*radius+1, 2*radius+1).
    """

    sigma: float
    radius: int
    weights: np.ndarray


def gaussian_kernel(sigma: float) -> GaussianKernel:
    """Normalized Gaussian kernel for a width in the admissible (0, 5] range."""
    if not (0.0 < sigma <= SIGMA_MAX):
        raise ValueError(f"kernel size outside supported range (0, {SIGMA_MAX}]: {sigma}")
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w1 = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    weights = np.outer(w1, w1)
    weights /= weights.sum()
    weights.setflags(write=False)
    return GaussianKernel(sigma=float(sigma), radius=radius, weights=weights)


def _convolve_replicate(grid: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """2-D convolution with clamp-to-edge padding, fixed accumulation order."""
    r = kernel.radius
    h, w = grid.shape
    padded = np.pad(grid, r, mode="edge")
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(2 * r + 1):
        for j in range(2 * r + 1):
            out += kernel.weights[i, j] * padded[i : i + h, j : j + w]
    return out


def smooth_label(mask: BinaryMask, sigma: float) -> SoftLabelMap:
    """Gaussian-smooth a binary mask into a continuous label map.

    Replicate padding keeps constant regions constant at the borders, so
    pixels farther than the kernel radius from any boundary stay binary.
    """
    kernel = gaussian_kernel(sigma)
    out = _convolve_replicate(mask.data, kernel)
    # Convex combination of 0/1 values; clip float residue at the ends.
    return SoftLabelMap(np.clip(out, 0.0, 1.0))


def augment_labels(mask: BinaryMask, sigmas) -> list[SoftLabelMap]:
    """One smoothed label per kernel width, order preserved."""
    sigmas = list(sigmas)
    if not sigmas:
        raise ValueError("sigma list must be non-empty")
    return [smooth_label(mask, s) for s in sigmas]


def boundary_band(mask: BinaryMask, radius: int) -> BinaryMask:
    """Pixels within Chebyshev distance `radius` of an opposite-valued pixel.

    A pixel is in the band iff its (2r+1)^2 window, clipped at the borders,
    contains both classes; replicate padding realizes the clipping because
    padded entries duplicate in-window values.
    """
    if radius < 1:
        raise ValueError(f"band radius must be >= 1, got {radius}")
    h, w = mask.data.shape
    padded = np.pad(mask.data, radius, mode="edge")
    lo = np.full((h, w), np.inf)
    hi = np.full((h, w), -np.inf)
    for i in range(2 * radius + 1):
        for j in range(2 * radius + 1):
            window = padded[i : i + h, j : j + w]
            np.minimum(lo, window, out=lo)
            np.maximum(hi, window, out=hi)
    return BinaryMask((hi != lo).astype(np.float64))


def uniform_smooth_label(mask: BinaryMask, radius: int, value: float) -> SoftLabelMap:
    """Flat-value baseline: assign `value` inside the boundary band only."""
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"smoothing value must lie in [0, 1], got {value}")
    band = boundary_band(mask, radius)
    return SoftLabelMap(np.where(band.data == 1.0, value, mask.data))
