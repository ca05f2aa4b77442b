"""Dense calibration measure for saliency predictions.

Predictions are pooled per image into 12 bins: bin 0 holds exactly s = 0,
bin 11 exactly s = 1, and bins 1..10 the left-open intervals
((k-1)/10, k/10]. Each bin gets a mean confidence conf = mean max(s, 1-s)
and a mean thresholded accuracy macc: the prediction is binarized at the
256 thresholds t_j = j/256 (j = 1..256, g(s) = 1 iff s >= t_j), accuracy
against the binary ground truth is taken per threshold, and macc averages
the 256 values. The per-image measure is the bin-count-weighted mean of
|macc - conf|; the dataset measure is the plain mean of the per-image
values. Thresholds are dyadic so every comparison is exact in double
precision; a prediction equal to its binary ground truth scores exactly 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .maps import BinaryMask, SaliencyMap

BIN_COUNT = 12
THRESHOLD_COUNT = 256

# Interior bin edges as doubles; searchsorted(side="left") reproduces the
# left-open/right-closed convention exactly.
_BIN_EDGES = np.arange(11, dtype=np.float64) / 10.0

# t_j = j/256 for j = 1..256, all exactly representable.
THRESHOLDS = np.arange(1, THRESHOLD_COUNT + 1, dtype=np.float64) / 256.0


@dataclass(frozen=True)
class BinStats:
    """Per-bin pixel count, mean confidence and mean thresholded accuracy."""

    index: int
    count: int
    conf: float | None
    macc: float | None


@dataclass(frozen=True)
class CalibrationReport:
    """Per-image measures, dataset mean, and pixel-pooled per-bin stats."""

    per_image: list[tuple[str, float]]
    bins: list[BinStats]
    dataset_c: float


def assign_bin(s: float) -> int:
    """Bin index for a single prediction value."""
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"prediction must lie in [0, 1], got {s}")
    if s == 1.0:
        return BIN_COUNT - 1
    return int(np.searchsorted(_BIN_EDGES, s, side="left"))


def confidence(s: float) -> float:
    """Model confidence max(s, 1-s) for a single prediction value."""
    if not (0.0 <= s <= 1.0):
        raise ValueError(f"prediction must lie in [0, 1], got {s}")
    return max(s, 1.0 - s)


def _bin_indices(values: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(_BIN_EDGES, values, side="left")
    idx[values == 1.0] = BIN_COUNT - 1
    return idx


def _threshold_counts(values: np.ndarray) -> np.ndarray:
    """Number of thresholds classified foreground: #{j : s >= j/256}.

    256*s is exact (power-of-two scaling), so floor gives the exact count.
    """
    return np.floor(256.0 * values).astype(np.int64)


def _acc_from_histograms(hist_fg: np.ndarray, hist_bg: np.ndarray, count: int) -> tuple[np.ndarray, float]:
    """acc vector over the 256 thresholds from per-count histograms.

    hist_fg[c] / hist_bg[c] count bin pixels whose foreground-threshold
    count is c (0..256). At threshold j, foreground pixels are correct iff
    c >= j and background pixels iff c < j.
    """
    fg_correct = np.cumsum(hist_fg[::-1])[::-1]  # fg_correct[c] = #fg with count >= c
    bg_correct = np.cumsum(hist_bg)  # bg_correct[c] = #bg with count <= c
    j = np.arange(1, THRESHOLD_COUNT + 1)
    correct = fg_correct[j] + bg_correct[j - 1]
    acc = correct.astype(np.float64) / count
    return acc, float(acc.sum() / THRESHOLD_COUNT)


def _check_pair(pred: SaliencyMap, gt: BinaryMask) -> None:
    if pred.data.shape != gt.data.shape:
        raise ValueError(
            f"prediction/ground-truth shape mismatch: {pred.data.shape} vs {gt.data.shape}"
        )


def bin_accuracy(pred: SaliencyMap, gt: BinaryMask, bin_index: int):
    """(acc 256-vector, macc) over the pixels of one bin; None if empty."""
    if not (0 <= bin_index < BIN_COUNT):
        raise ValueError(f"bin index must lie in 0..{BIN_COUNT - 1}, got {bin_index}")
    _check_pair(pred, gt)
    s = pred.data.ravel()
    y = gt.data.ravel()
    members = _bin_indices(s) == bin_index
    count = int(members.sum())
    if count == 0:
        return None
    counts = _threshold_counts(s[members])
    fg = y[members] == 1.0
    hist_fg = np.bincount(counts[fg], minlength=THRESHOLD_COUNT + 1)
    hist_bg = np.bincount(counts[~fg], minlength=THRESHOLD_COUNT + 1)
    return _acc_from_histograms(hist_fg, hist_bg, count)


def image_calibration(pred: SaliencyMap, gt: BinaryMask) -> tuple[float, list[BinStats]]:
    """Per-image dense calibration measure and its per-bin breakdown."""
    _check_pair(pred, gt)
    s = pred.data.ravel()
    y = gt.data.ravel()
    idx = _bin_indices(s)
    counts_all = _threshold_counts(s)
    p_hat = np.maximum(s, 1.0 - s)
    total = s.size

    stats: list[BinStats] = []
    weighted_gaps: list[float] = []
    for m in range(BIN_COUNT):
        members = idx == m
        count = int(members.sum())
        if count == 0:
            stats.append(BinStats(index=m, count=0, conf=None, macc=None))
            continue
        # fsum keeps the mean exactly rounded, independent of pixel order.
        conf = math.fsum(p_hat[members].tolist()) / count
        fg = members & (y == 1.0)
        bg = members & (y == 0.0)
        hist_fg = np.bincount(counts_all[fg], minlength=THRESHOLD_COUNT + 1)
        hist_bg = np.bincount(counts_all[bg], minlength=THRESHOLD_COUNT + 1)
        _, macc = _acc_from_histograms(hist_fg, hist_bg, count)
        stats.append(BinStats(index=m, count=count, conf=conf, macc=macc))
        weighted_gaps.append((count / total) * abs(macc - conf))
    return math.fsum(weighted_gaps), stats


def dataset_calibration(pairs, ids=None) -> CalibrationReport:
    """Dataset measure: mean of per-image measures plus pooled bin stats."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("dataset must contain at least one prediction/mask pair")
    if ids is None:
        ids = [f"{i:04d}" for i in range(len(pairs))]
    ids = list(ids)
    if len(ids) != len(pairs):
        raise ValueError(f"got {len(ids)} ids for {len(pairs)} pairs")

    pooled_fg = np.zeros((BIN_COUNT, THRESHOLD_COUNT + 1), dtype=np.int64)
    pooled_bg = np.zeros((BIN_COUNT, THRESHOLD_COUNT + 1), dtype=np.int64)
    pooled_conf_sums: list[list[float]] = [[] for _ in range(BIN_COUNT)]

    per_image: list[tuple[str, float]] = []
    c_values: list[float] = []
    for image_id, (pred, gt) in zip(ids, pairs):
        _check_pair(pred, gt)
        c_i, stats = image_calibration(pred, gt)
        per_image.append((image_id, c_i))
        c_values.append(c_i)

        s = pred.data.ravel()
        y = gt.data.ravel()
        idx = _bin_indices(s)
        counts_all = _threshold_counts(s)
        p_hat = np.maximum(s, 1.0 - s)
        for m in range(BIN_COUNT):
            members = idx == m
            if not members.any():
                continue
            fg = members & (y == 1.0)
            bg = members & (y == 0.0)
            pooled_fg[m] += np.bincount(counts_all[fg], minlength=THRESHOLD_COUNT + 1)
            pooled_bg[m] += np.bincount(counts_all[bg], minlength=THRESHOLD_COUNT + 1)
            pooled_conf_sums[m].append(math.fsum(p_hat[members].tolist()))

    bins: list[BinStats] = []
    for m in range(BIN_COUNT):
        count = int(pooled_fg[m].sum() + pooled_bg[m].sum())
        if count == 0:
            bins.append(BinStats(index=m, count=0, conf=None, macc=None))
            continue
        conf = math.fsum(pooled_conf_sums[m]) / count
        _, macc = _acc_from_histograms(pooled_fg[m], pooled_bg[m], count)
        bins.append(BinStats(index=m, count=count, conf=conf, macc=macc))

    dataset_c = math.fsum(c_values) / len(c_values)
    return CalibrationReport(per_image=per_image, bins=bins, dataset_c=dataset_c)


def bin_bounds(index: int) -> tuple[float, float]:
    """(lo, hi) of a bin; the two point bins report identical endpoints."""
    if index == 0:
        return 0.0, 0.0
    if index == BIN_COUNT - 1:
        return 1.0, 1.0
    if not (1 <= index <= 10):
        raise ValueError(f"bin index must lie in 0..{BIN_COUNT - 1}, got {index}")
    return (index - 1) / 10.0, index / 10.0


def write_reliability_csv(path, bins: list[BinStats]) -> None:
    """Reliability table: bin,lo,hi,count,conf,macc with empty stats blank."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "lo", "hi", "count", "conf", "macc"])
        for stat in bins:
            lo, hi = bin_bounds(stat.index)
            writer.writerow(
                [
                    stat.index,
                    repr(lo),
                    repr(hi),
                    stat.count,
                    "" if stat.conf is None else repr(stat.conf),
                    "" if stat.macc is None else repr(stat.macc),
                ]
            )
