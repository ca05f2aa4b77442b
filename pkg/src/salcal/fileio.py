"""Bit-exact file formats: PGM rasters, DMAP float maps, model files, reports.

PGM is binary P5 with maxval 255. DMAP is a little-endian float32 container:
magic "DMAP", three u32 fields (width, height, channels), then
width*height*channels floats in row-major, channel-interleaved order.
Model files use magic "MHSD", u32 version (1), u32 head count, u32 encoder
channels (8), followed by all parameters as little-endian float64 in the
order conv1 weights, conv1 bias, conv2 weights, conv2 bias, then each
head's weights and bias.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .calib import BIN_COUNT, BinStats, bin_bounds
from .maps import BinaryMask, SaliencyMap, quantize_u8
from .net import ENCODER_CHANNELS, MHeadsModel

MODEL_VERSION = 1

_DMAP_MAGIC = b"DMAP"
_MODEL_MAGIC = b"MHSD"


class FormatError(ValueError):
    """Raised when a file does not match its declared format."""


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: expected {n} bytes of {what}, got {len(data)}")
    return data


# ---------------------------------------------------------------------------
# PGM


def write_pgm(path, grid: np.ndarray) -> None:
    """Write a uint8 (height, width) array as binary P5, maxval 255."""
    arr = np.asarray(grid)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError(f"expected a 2-D uint8 array, got {arr.dtype} {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def _pgm_tokens(fh):
    """Header tokens, skipping whitespace and # comments byte by byte."""
    token = b""
    while True:
        ch = fh.read(1)
        if ch == b"":
            raise FormatError("truncated PGM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if token:
                yield token
                token = b""
            continue
        token += ch


def read_pgm(path) -> np.ndarray:
    """Read binary P5 with maxval 255 into a uint8 (height, width) array."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 2, "magic")
        if magic != b"P5":
            raise FormatError(f"not a binary PGM (magic {magic!r})")
        tokens = _pgm_tokens(fh)
        try:
            width, height, maxval = (int(next(tokens)) for _ in range(3))
        except ValueError as exc:
            raise FormatError(f"malformed PGM header: {exc}") from None
        if width < 1 or height < 1:
            raise FormatError(f"bad PGM dimensions {width}x{height}")
        if maxval != 255:
            raise FormatError(f"unsupported PGM maxval {maxval} (need 255)")
        # The single whitespace byte after maxval was consumed by the tokenizer.
        payload = _read_exact(fh, width * height, "pixel data")
        if fh.read(1) != b"":
            raise FormatError("trailing bytes after PGM pixel data")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def read_mask_pgm(path) -> BinaryMask:
    """Read a PGM containing only values 0 and 255 as a binary mask."""
    grid = read_pgm(path)
    if not np.isin(grid, (0, 255)).all():
        raise FormatError(f"mask file {path} contains values other than 0 and 255")
    return BinaryMask((grid == 255).astype(np.float64))


def write_mask_pgm(path, mask: BinaryMask) -> None:
    write_pgm(path, (mask.data * 255.0).astype(np.uint8))


def write_saliency_pgm(path, saliency: SaliencyMap) -> None:
    """Quantize to the 8-bit grid and write as PGM."""
    write_pgm(path, quantize_u8(saliency))


# ---------------------------------------------------------------------------
# DMAP


def write_dmap(path, array: np.ndarray) -> None:
    """Write a (h, w) or (h, w, c) float array as 32-bit DMAP."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"expected (h, w) or (h, w, c) data, got shape {np.shape(array)}")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite values to DMAP")
    height, width, channels = arr.shape
    with open(path, "wb") as fh:
        fh.write(_DMAP_MAGIC)
        fh.write(struct.pack("<III", width, height, channels))
        fh.write(arr.astype("<f4").tobytes())


def read_dmap(path) -> np.ndarray:
    """Read a DMAP into float64; single-channel files come back 2-D."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != _DMAP_MAGIC:
            raise FormatError(f"not a DMAP file (magic {magic!r})")
        width, height, channels = struct.unpack("<III", _read_exact(fh, 12, "header"))
        if width < 1 or height < 1 or channels < 1:
            raise FormatError(f"bad DMAP dimensions {width}x{height}x{channels}")
        payload = _read_exact(fh, width * height * channels * 4, "payload")
        if fh.read(1) != b"":
            raise FormatError("trailing bytes after DMAP payload")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.isfinite(values).all():
        raise FormatError(f"DMAP payload in {path} contains NaN or Inf")
    arr = values.reshape(height, width, channels)
    return arr[:, :, 0] if channels == 1 else arr


# ---------------------------------------------------------------------------
# Model files


def save_model(path, model: MHeadsModel) -> None:
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<III", MODEL_VERSION, model.head_count, ENCODER_CHANNELS))
        for part in (model.conv1_w, model.conv1_b, model.conv2_w, model.conv2_b):
            fh.write(part.astype("<f8").tobytes())
        for m in range(model.head_count):
            fh.write(model.head_w[m].astype("<f8").tobytes())
            fh.write(struct.pack("<d", model.head_b[m]))


def load_model(path) -> MHeadsModel:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != _MODEL_MAGIC:
            raise FormatError(f"not a model file (magic {magic!r})")
        version, head_count, channels = struct.unpack("<III", _read_exact(fh, 12, "header"))
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model version {version}")
        if channels != ENCODER_CHANNELS:
            raise FormatError(f"unsupported encoder width {channels}")
        if head_count < 2:
            raise FormatError(f"bad head count {head_count}")
        param_count = 224 + 584 + 9 * head_count
        payload = _read_exact(fh, param_count * 8, "parameters")
        if fh.read(1) != b"":
            raise FormatError("trailing bytes after model parameters")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.isfinite(flat).all():
        raise FormatError(f"model file {path} contains non-finite parameters")

    c = ENCODER_CHANNELS
    pos = 0

    def take(n):
        nonlocal pos
        out = flat[pos : pos + n]
        pos += n
        return out

    conv1_w = take(c * 27).reshape(c, 3, 3, 3)
    conv1_b = take(c)
    conv2_w = take(c * c * 9).reshape(c, c, 3, 3)
    conv2_b = take(c)
    head_w = np.empty((head_count, c))
    head_b = np.empty(head_count)
    for m in range(head_count):
        head_w[m] = take(c)
        head_b[m] = take(1)[0]
    return MHeadsModel(conv1_w.copy(), conv1_b.copy(), conv2_w.copy(), conv2_b.copy(),
                       head_w, head_b)


# ---------------------------------------------------------------------------
# Evaluation reports


def write_report(path, *, dataset_mae: float, dataset_max_fbeta: float,
                 dataset_mean_fbeta: float, dataset_calibration_c: float,
                 per_image, bins: list[BinStats]) -> None:
    """JSON report; per_image holds (id, mae, max_fbeta, c) tuples."""
    if len(bins) != BIN_COUNT:
        raise ValueError(f"expected {BIN_COUNT} bin entries, got {len(bins)}")
    doc = {
        "dataset": {
            "mae": dataset_mae,
            "max_fbeta": dataset_max_fbeta,
            "mean_fbeta": dataset_mean_fbeta,
            "calibration_C": dataset_calibration_c,
        },
        "per_image": [
            {"id": image_id, "mae": image_mae, "max_fbeta": image_max_f, "C": image_c}
            for image_id, image_mae, image_max_f, image_c in per_image
        ],
        "bins": [
            {
                "index": stat.index,
                "lo": bin_bounds(stat.index)[0],
                "hi": bin_bounds(stat.index)[1],
                "count": stat.count,
                "conf": stat.conf,
                "macc": stat.macc,
            }
            for stat in bins
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
