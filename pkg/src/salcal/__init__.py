"""Calibrated salient-object detection toolkit.

Library + CLI for boundary label smoothing, uncertainty-aware temperature
softening, the dense calibration measure, standard saliency accuracy
metrics, and a small deterministic multi-head trainer on synthetic data.
"""

from .maps import (
    BinaryMask,
    LogitMap,
    PixelGrid,
    RgbImage,
    SaliencyMap,
    SoftLabelMap,
    TemperatureMap,
    UncertaintyMap,
    dequantize_u8,
    quantize_u8,
    snap_to_u8_grid,
)
from .bds import (
    DEFAULT_SIGMAS,
    GaussianKernel,
    augment_labels,
    boundary_band,
    gaussian_kernel,
    smooth_label,
    uniform_smooth_label,
)
from .uats import (
    apply_uats,
    edge_temperature,
    relaxed_sigmoid,
    sigmoid,
    temperature_from_uncertainty,
    uncertainty_from_heads,
    uniform_temperature,
)
from .calib import (
    BIN_COUNT,
    BinStats,
    CalibrationReport,
    assign_bin,
    bin_accuracy,
    confidence,
    dataset_calibration,
    image_calibration,
    write_reliability_csv,
)
from .metrics import FCurve, dataset_fbeta, fbeta_curve, mae
from .net import (
    EvalMetrics,
    Gradients,
    MHeadsModel,
    OptimizerState,
    TrainConfig,
    TrainHistory,
    bce_loss,
    evaluate_model,
    forward,
    gradcheck_point,
    gradient_check,
    init_model,
    loss_and_grad,
    predict,
    sgd_step,
    train,
)
from .synth import Sample, SynthConfig, generate_dataset, generate_sample
from .rng import SplitMix64

__version__ = "0.1.0"
