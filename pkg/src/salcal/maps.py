"""Grid-valued domain types shared by every other module.

All maps wrap a read-only float64 numpy array in row-major (height, width)
layout. Construction validates shape and value-range invariants once; after
that instances are immutable and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _validated_grid(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"grid dimensions must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("grid contains NaN or Inf")
    return arr


@dataclass(frozen=True, eq=False)
class PixelGrid:
    """Row-major 2-D grid of finite doubles."""

    data: np.ndarray

    def __post_init__(self):
        arr = _validated_grid(self.data)
        self._check_values(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def _check_values(self, arr: np.ndarray) -> None:
        pass

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_flat(cls, width: int, height: int, values):
        """Build from a row-major flat sequence of length width*height."""
        flat = np.asarray(values, dtype=np.float64).ravel()
        if width < 1 or height < 1:
            raise ValueError(f"dimensions must be positive, got {width}x{height}")
        if flat.size != width * height:
            raise ValueError(
                f"expected {width * height} values for {width}x{height}, got {flat.size}"
            )
        return cls(flat.reshape(height, width))


class SaliencyMap(PixelGrid):
    """Prediction map with values in [0, 1]."""

    def _check_values(self, arr):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("saliency values must lie in [0, 1]")


class SoftLabelMap(PixelGrid):
    """Smoothed ground truth with values in [0, 1]."""

    def _check_values(self, arr):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("soft label values must lie in [0, 1]")


class BinaryMask(PixelGrid):
    """Ground-truth mask whose values are exactly 0 or 1."""

    def _check_values(self, arr):
        if not np.isin(arr, (0.0, 1.0)).all():
            raise ValueError("mask values must be exactly 0 or 1")


class LogitMap(PixelGrid):
    """Unconstrained pre-activation network output."""


class UncertaintyMap(PixelGrid):
    """Per-pixel uncertainty in [0, 1]."""

    def _check_values(self, arr):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("uncertainty values must lie in [0, 1]")


class TemperatureMap(PixelGrid):
    """Per-pixel softening temperature, always >= 1."""

    def _check_values(self, arr):
        if arr.min() < 1.0:
            raise ValueError("temperature values must be >= 1")


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three-channel image, values in [0, 1], stored (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must have shape (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image dimensions must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("image contains NaN or Inf")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def quantize_u8(saliency: SaliencyMap) -> np.ndarray:
    """Map [0,1] values onto {0..255} with round-half-up."""
    return np.floor(saliency.data * 255.0 + 0.5).astype(np.uint8)


def dequantize_u8(grid: np.ndarray) -> SaliencyMap:
    """Inverse of quantize_u8 on the 8-bit grid: value = v/255."""
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D 8-bit grid, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("8-bit grid must have an integer dtype")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("8-bit grid values must lie in {0..255}")
    return SaliencyMap(arr.astype(np.float64) / 255.0)


def snap_to_u8_grid(saliency: SaliencyMap) -> SaliencyMap:
    """Round a map to the nearest 8-bit representable values (v/255)."""
    return dequantize_u8(quantize_u8(saliency))
