"""Relaxed sigmoid and temperature constructions for softened predictions.

The relaxed sigmoid divides logits by a per-pixel temperature T >= 1 before
squashing, pulling outputs toward 0.5 without ever increasing confidence.
Three temperature sources are provided: learned uncertainty T = exp(alpha*U)
with U derived from the variance of multiple prediction heads, an image
edge map T = exp(e), and a spatially uniform constant.
"""

from __future__ import annotations

import numpy as np

from .maps import (
    LogitMap,
    RgbImage,
    SaliencyMap,
    TemperatureMap,
    UncertaintyMap,
)

DEFAULT_ALPHA = 1.0


def _check_alpha(alpha: float) -> float:
    if alpha < 0.0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return float(alpha)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    # Branch on sign so exp never overflows.
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(z: LogitMap) -> SaliencyMap:
    """Pointwise 1 / (1 + exp(-z))."""
    return SaliencyMap(_stable_sigmoid(z.data))


def relaxed_sigmoid(z: LogitMap, temperature: TemperatureMap) -> SaliencyMap:
    """Pointwise 1 / (1 + exp(-z/T)); T = 1 reproduces sigmoid exactly."""
    if z.data.shape != temperature.data.shape:
        raise ValueError(
            f"logit/temperature shape mismatch: {z.data.shape} vs {temperature.data.shape}"
        )
    return SaliencyMap(_stable_sigmoid(z.data / temperature.data))


def temperature_from_uncertainty(
    uncertainty: UncertaintyMap, alpha: float = DEFAULT_ALPHA
) -> TemperatureMap:
    """T = exp(alpha * U), so T ranges over [1, exp(alpha)]."""
    alpha = _check_alpha(alpha)
    return TemperatureMap(np.exp(alpha * uncertainty.data))


def uncertainty_from_heads(predictions: list[SaliencyMap]) -> UncertaintyMap:
    """Per-pixel population variance of the head predictions, scaled to [0, 1].

    Raw variance of [0,1] values is bounded by 1/4, so it is scaled by 4
    (and clamped) to make the attainable maximum exactly 1.
    """
    if len(predictions) < 2:
        raise ValueError(f"need at least 2 head predictions, got {len(predictions)}")
    shape = predictions[0].data.shape
    for p in predictions[1:]:
        if p.data.shape != shape:
            raise ValueError(f"head prediction shape mismatch: {p.data.shape} vs {shape}")
    stacked = np.stack([p.data for p in predictions])
    return UncertaintyMap(head_spread(stacked, axis=0))


def head_spread(stacked: np.ndarray, axis: int) -> np.ndarray:
    """clamp(4 * population variance, 0, 1) along the head axis.

    The values are shifted by the first head before the variance (which is
    shift-invariant), so identical heads yield exactly zero.
    """
    first = np.take(stacked, 0, axis=axis)
    shifted = stacked - np.expand_dims(first, axis)
    return np.clip(4.0 * shifted.var(axis=axis), 0.0, 1.0)


def luminance(image: RgbImage) -> np.ndarray:
    """Rec. 601 luma: 0.299 R + 0.587 G + 0.114 B."""
    d = image.data
    return 0.299 * d[:, :, 0] + 0.587 * d[:, :, 1] + 0.114 * d[:, :, 2]


def _sobel_gradients(grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel responses with replicate padding.

    Computed as differences of identically-weighted (1,2,1) column/row sums
    so flat regions cancel exactly instead of leaving rounding residue.
    """
    h, w = grid.shape
    p = np.pad(grid, 1, mode="edge")

    def colsum(x0):
        return p[0:h, x0 : x0 + w] + 2.0 * p[1 : 1 + h, x0 : x0 + w] + p[2 : 2 + h, x0 : x0 + w]

    def rowsum(y0):
        return p[y0 : y0 + h, 0:w] + 2.0 * p[y0 : y0 + h, 1 : 1 + w] + p[y0 : y0 + h, 2 : 2 + w]

    return colsum(2) - colsum(0), rowsum(2) - rowsum(0)


def edge_temperature(image: RgbImage) -> TemperatureMap:
    """T = exp(e) with e the max-normalized Sobel gradient magnitude of luma."""
    y = luminance(image)
    gx, gy = _sobel_gradients(y)
    magnitude = np.hypot(gx, gy)
    peak = magnitude.max()
    edge = magnitude / peak if peak > 0.0 else np.zeros_like(magnitude)
    return TemperatureMap(np.exp(edge))


def uniform_temperature(width: int, height: int, t: float) -> TemperatureMap:
    """Spatially constant temperature map."""
    if t < 1.0:
        raise ValueError(f"temperature must be >= 1, got {t}")
    if width < 1 or height < 1:
        raise ValueError(f"dimensions must be positive, got {width}x{height}")
    return TemperatureMap(np.full((height, width), float(t)))


def apply_uats(
    z: LogitMap, uncertainty: UncertaintyMap, alpha: float = DEFAULT_ALPHA
) -> SaliencyMap:
    """Softened output: relaxed sigmoid at T = exp(alpha * U)."""
    if z.data.shape != uncertainty.data.shape:
        raise ValueError(
            f"logit/uncertainty shape mismatch: {z.data.shape} vs {uncertainty.data.shape}"
        )
    return relaxed_sigmoid(z, temperature_from_uncertainty(uncertainty, alpha))
