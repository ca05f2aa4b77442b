"""Deterministic synthetic salient-shape dataset.

Each sample is a noisy constant background with one noisy constant-color
shape (disc or axis-aligned rectangle) and its exact raster mask.
Backgrounds are dark (luma in [0.08, 0.45]) and shapes bright (luma in
[0.55, 0.92]): a shared pixel-local encoder needs a cue that does not flip
meaning from image to image, and brightness-implies-salient is that cue.
All randomness comes from the SplitMix64 stream; with the draw order below
the whole dataset is a pure function of the seed.

Draw order per attempt (an attempt restarts if the foreground fraction
falls outside [0.05, 0.6]; at most 100 attempts):

  1. background base color: 3 uniforms (r, g, b) per candidate, redrawn
     (up to 100 times) until its luma lands in the background band
  2. shape fill color: 3 uniforms per candidate, redrawn until its luma
     lands in the foreground band AND its Euclidean RGB distance from the
     background base is >= min_color_gap
  3. shape kind: 1 uniform, disc if u < 0.5 else rectangle
  4. disc: radius    r  = rmin + u*(rmax - rmin), rmin = size/8, rmax = size/3.5
           center    cx = r + u*(size - 2r), cy likewise
     rect: radius draw as for the disc, area A = pi*r^2
           aspect    a  = 0.5 + u          (width/height balance)
           width     w  = sqrt(A*a), height h = A/w
           corner    x0 = u*(size - w), y0 = u*(size - h)
  5. after the mask is accepted: size*size*3 Gaussian noise values in
     row-major, channel-interleaved order (Box-Muller pairs in sequence)

Pixel centers sit at integer coordinates; a disc covers (u - cx)^2 +
(v - cy)^2 <= r^2 with u the column and v the row, a rectangle covers
x0 <= u < x0 + w and y0 <= v < y0 + h. Channel values are
clamp(color + noise_sigma * n, 0, 1) with luma = 0.299 R + 0.587 G + 0.114 B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .maps import BinaryMask, RgbImage
from .rng import SplitMix64

MAX_ATTEMPTS = 100
FG_FRACTION_RANGE = (0.05, 0.6)
BACKGROUND_LUMA_RANGE = (0.08, 0.45)
FOREGROUND_LUMA_RANGE = (0.55, 0.92)

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SynthConfig:
    count: int
    seed: int
    size: int = 48
    noise_sigma: float = 0.05
    min_color_gap: float = 0.4

    def __post_init__(self):
        if self.size < 16:
            raise ValueError(f"image size must be >= 16, got {self.size}")
        if self.count < 1:
            raise ValueError(f"sample count must be >= 1, got {self.count}")


@dataclass(frozen=True, eq=False)
class Sample:
    image: RgbImage
    mask: BinaryMask
    id: str


def _draw_color(rng: SplitMix64) -> np.ndarray:
    return np.array([rng.next_float(), rng.next_float(), rng.next_float()])


def _draw_color_in_band(rng: SplitMix64, luma_range) -> np.ndarray | None:
    for _ in range(MAX_ATTEMPTS):
        color = _draw_color(rng)
        if luma_range[0] <= float(color @ _LUMA) <= luma_range[1]:
            return color
    return None


def _draw_mask(rng: SplitMix64, size: int) -> np.ndarray:
    cols, rows = np.meshgrid(
        np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64)
    )
    rmin, rmax = size / 8.0, size / 3.5
    is_disc = rng.next_float() < 0.5
    radius = rmin + rng.next_float() * (rmax - rmin)
    if is_disc:
        cx = radius + rng.next_float() * (size - 2.0 * radius)
        cy = radius + rng.next_float() * (size - 2.0 * radius)
        inside = (cols - cx) ** 2 + (rows - cy) ** 2 <= radius * radius
    else:
        area = math.pi * radius * radius
        aspect = 0.5 + rng.next_float()
        w = math.sqrt(area * aspect)
        h = area / w
        x0 = rng.next_float() * (size - w)
        y0 = rng.next_float() * (size - h)
        inside = (cols >= x0) & (cols < x0 + w) & (rows >= y0) & (rows < y0 + h)
    return inside.astype(np.float64)


def generate_sample(cfg: SynthConfig, rng_state: int, sample_id: str = "0000") -> tuple[Sample, int]:
    """One sample from the given PRNG state; returns the advanced state."""
    rng = SplitMix64(rng_state)
    for _ in range(MAX_ATTEMPTS):
        base = _draw_color_in_band(rng, BACKGROUND_LUMA_RANGE)
        if base is None:
            continue
        fill = None
        for _ in range(MAX_ATTEMPTS):
            candidate = _draw_color(rng)
            in_band = FOREGROUND_LUMA_RANGE[0] <= float(candidate @ _LUMA) <= FOREGROUND_LUMA_RANGE[1]
            if in_band and np.linalg.norm(candidate - base) >= cfg.min_color_gap:
                fill = candidate
                break
        if fill is None:
            continue

        mask = _draw_mask(rng, cfg.size)

        fraction = mask.mean()
        if not (FG_FRACTION_RANGE[0] <= fraction <= FG_FRACTION_RANGE[1]):
            continue

        n = cfg.size * cfg.size * 3
        noise = rng.next_normals(n).reshape(cfg.size, cfg.size, 3)
        color = np.where(mask[:, :, None] == 1.0, fill[None, None, :], base[None, None, :])
        image = np.clip(color + cfg.noise_sigma * noise, 0.0, 1.0)
        sample = Sample(image=RgbImage(image), mask=BinaryMask(mask), id=sample_id)
        return sample, rng.state
    raise RuntimeError(
        f"failed to generate a sample within {MAX_ATTEMPTS} attempts (seed state {rng_state})"
    )


def generate_dataset(cfg: SynthConfig) -> list[Sample]:
    """cfg.count samples, PRNG state threaded through; ids are zero-padded."""
    samples: list[Sample] = []
    state = cfg.seed
    for i in range(cfg.count):
        sample, state = generate_sample(cfg, state, sample_id=f"{i:04d}")
        samples.append(sample)
    return samples
