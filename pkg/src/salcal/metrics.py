"""Accuracy metrics reported alongside the calibration measure.

MAE is the plain mean absolute difference. The F-measure sweeps the 256
thresholds t_k = k/255 (k = 0..255, g(s) = 1 iff s >= t_k; the k = 0
threshold classifies everything foreground by convention) and reports the
precision/recall/F curves plus their max and mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import BinaryMask, SaliencyMap

DEFAULT_BETA2 = 0.3

F_THRESHOLDS = np.arange(256, dtype=np.float64) / 255.0


@dataclass(frozen=True, eq=False)
class FCurve:
    precision: np.ndarray
    recall: np.ndarray
    f: np.ndarray
    max_f: float
    mean_f: float
    beta2: float


def _check_pair(pred: SaliencyMap, gt: BinaryMask) -> None:
    if pred.data.shape != gt.data.shape:
        raise ValueError(
            f"prediction/ground-truth shape mismatch: {pred.data.shape} vs {gt.data.shape}"
        )


def mae(pred: SaliencyMap, gt: BinaryMask) -> float:
    """Mean absolute error over all pixels."""
    _check_pair(pred, gt)
    return float(np.abs(pred.data - gt.data).mean())


def fbeta_curve(pred: SaliencyMap, gt: BinaryMask, beta2: float = DEFAULT_BETA2) -> FCurve:
    """Precision/recall/F over the 256-threshold sweep.

    Zero-denominator precision or F entries report 0. Ground truth without
    any foreground pixel leaves recall undefined and is rejected.
    """
    if beta2 <= 0.0:
        raise ValueError(f"beta2 must be positive, got {beta2}")
    _check_pair(pred, gt)
    fg = gt.data.ravel() == 1.0
    n_fg = int(fg.sum())
    if n_fg == 0:
        raise ValueError("degenerate ground truth: no foreground pixel, recall undefined")

    s = pred.data.ravel()
    g = s[None, :] >= F_THRESHOLDS[:, None]  # (256, n_pixels)
    tp = (g & fg[None, :]).sum(axis=1).astype(np.float64)
    predicted = g.sum(axis=1).astype(np.float64)

    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = tp / n_fg
    denom = beta2 * precision + recall
    f = np.divide(
        (1.0 + beta2) * precision * recall,
        denom,
        out=np.zeros_like(tp),
        where=denom > 0,
    )
    return FCurve(
        precision=precision,
        recall=recall,
        f=f,
        max_f=float(f.max()),
        mean_f=float(f.mean()),
        beta2=float(beta2),
    )


def dataset_fbeta(curves: list[FCurve]) -> tuple[float, float, np.ndarray]:
    """(max_f, mean_f, mean curve): F averaged over images per threshold."""
    if not curves:
        raise ValueError("need at least one F-curve")
    mean_curve = np.mean(np.stack([c.f for c in curves]), axis=0)
    return float(mean_curve.max()), float(mean_curve.mean()), mean_curve
