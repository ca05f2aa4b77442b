"""Small multi-head saliency network with hand-written backpropagation.

Architecture: two 3x3 zero-padded convolutions (3->8, 8->8) with ReLU form
a shared encoder; M independent 1x1 convolutions (8->1, bias) produce one
logit map each. Parameter count is 224 + 584 + 9*M (853 for M = 5).

Training minimizes the head-weighted per-pixel binary cross-entropy
against (possibly soft) labels: equal weights by default, or relaxed
winner-takes-all weights that keep the heads from collapsing onto one
readout (see TrainConfig.head_loss). With uncertainty-aware softening
enabled, the per-pixel temperature T = exp(alpha * U) is derived from the
variance of the plain per-head sigmoids; U is recomputed every forward
pass but treated as a constant during backprop, so no gradient flows
through the temperature. Updates are plain SGD with momentum, one sample
per step, in a seeded shuffle order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calib, metrics
from .maps import (
    BinaryMask,
    LogitMap,
    RgbImage,
    SaliencyMap,
    SoftLabelMap,
    UncertaintyMap,
    snap_to_u8_grid,
)
from .rng import SplitMix64
from .uats import DEFAULT_ALPHA, _check_alpha, _stable_sigmoid, head_spread

ENCODER_CHANNELS = 8


@dataclass(eq=False)
class MHeadsModel:
    conv1_w: np.ndarray  # (8, 3, 3, 3): out, in, ky, kx
    conv1_b: np.ndarray  # (8,)
    conv2_w: np.ndarray  # (8, 8, 3, 3)
    conv2_b: np.ndarray  # (8,)
    head_w: np.ndarray   # (M, 8)
    head_b: np.ndarray   # (M,)

    @property
    def head_count(self) -> int:
        return self.head_b.shape[0]

    @property
    def param_count(self) -> int:
        return 224 + 584 + 9 * self.head_count

    def param_arrays(self) -> list[np.ndarray]:
        """Parameter tensors in the canonical serialization order."""
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
                self.head_w, self.head_b]

    def copy(self) -> "MHeadsModel":
        return MHeadsModel(*[a.copy() for a in self.param_arrays()])


@dataclass(eq=False)
class Gradients:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    def param_arrays(self) -> list[np.ndarray]:
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
                self.head_w, self.head_b]


@dataclass(eq=False)
class OptimizerState:
    """One velocity buffer per parameter tensor, zero-initialized."""

    velocities: list[np.ndarray]

    @classmethod
    def for_model(cls, model: MHeadsModel) -> "OptimizerState":
        return cls([np.zeros_like(a) for a in model.param_arrays()])


@dataclass
class TrainConfig:
    seed: int = 0
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 20
    alpha: float = DEFAULT_ALPHA
    uats_enabled: bool = False
    bce_clamp_epsilon: float = 1e-7
    # "mean" weighs every head equally. "wta" (relaxed winner-takes-all,
    # the usual multi-head training rule) gives the per-pixel best head
    # weight 1-eps and the rest eps/(M-1): with a shared encoder the
    # per-head objective is convex in each head's weights, so equal
    # weighting collapses all heads onto one readout and kills the
    # disagreement signal the uncertainty map is built from.
    head_loss: str = "mean"
    wta_epsilon: float = 0.05

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        _check_alpha(self.alpha)
        if not (0.0 < self.bce_clamp_epsilon < 0.1):
            raise ValueError(
                f"clamp epsilon must lie in (0, 0.1), got {self.bce_clamp_epsilon}"
            )
        if self.head_loss not in ("mean", "wta"):
            raise ValueError(f"head_loss must be 'mean' or 'wta', got {self.head_loss!r}")
        if not (0.0 < self.wta_epsilon < 1.0):
            raise ValueError(f"wta epsilon must lie in (0, 1), got {self.wta_epsilon}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    eval_mae: list[float] = field(default_factory=list)
    eval_max_f: list[float] = field(default_factory=list)
    eval_c: list[float] = field(default_factory=list)


def init_model(head_count: int, seed: int) -> MHeadsModel:
    """Uniform(-b, b) weights with b = sqrt(6 / fan_in); zero biases.

    Draws come from one SplitMix64 stream in serialization order: conv1
    weights (flat C order), conv2 weights, then each head's weights. Biases
    consume no draws.
    """
    if head_count < 2:
        raise ValueError(f"need at least 2 heads, got {head_count}")
    rng = SplitMix64(seed)

    def uniform(shape, fan_in):
        bound = math.sqrt(6.0 / fan_in)
        u = rng.next_floats(int(np.prod(shape)))
        return (-bound + 2.0 * bound * u).reshape(shape)

    return MHeadsModel(
        conv1_w=uniform((ENCODER_CHANNELS, 3, 3, 3), 3 * 9),
        conv1_b=np.zeros(ENCODER_CHANNELS),
        conv2_w=uniform((ENCODER_CHANNELS, ENCODER_CHANNELS, 3, 3), ENCODER_CHANNELS * 9),
        conv2_b=np.zeros(ENCODER_CHANNELS),
        head_w=uniform((head_count, ENCODER_CHANNELS), ENCODER_CHANNELS),
        head_b=np.zeros(head_count),
    )


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-size 3x3 convolution with zero padding; x is (H, W, Cin)."""
    h, width = x.shape[:2]
    padded = np.zeros((h + 2, width + 2, x.shape[2]))
    padded[1:-1, 1:-1] = x
    out = np.broadcast_to(b, (h, width, w.shape[0])).copy()
    for ky in range(3):
        for kx in range(3):
            out += padded[ky : ky + h, kx : kx + width] @ w[:, :, ky, kx].T
    return out


def _conv3x3_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray):
    """Gradients (dw, db, dx) of _conv3x3 given upstream dout (H, W, Cout)."""
    h, width = x.shape[:2]
    padded = np.zeros((h + 2, width + 2, x.shape[2]))
    padded[1:-1, 1:-1] = x
    db = dout.sum(axis=(0, 1))
    dw = np.empty_like(w)
    dpadded = np.zeros_like(padded)
    for ky in range(3):
        for kx in range(3):
            window = padded[ky : ky + h, kx : kx + width]
            dw[:, :, ky, kx] = np.tensordot(dout, window, axes=([0, 1], [0, 1]))
            dpadded[ky : ky + h, kx : kx + width] += dout @ w[:, :, ky, kx]
    return dw, db, dpadded[1:-1, 1:-1]


def _forward_cache(model: MHeadsModel, x: np.ndarray):
    """Full forward pass returning intermediates needed by backprop."""
    z1 = _conv3x3(x, model.conv1_w, model.conv1_b)
    a1 = np.maximum(z1, 0.0)
    z2 = _conv3x3(a1, model.conv2_w, model.conv2_b)
    a2 = np.maximum(z2, 0.0)
    logits = a2 @ model.head_w.T + model.head_b  # (H, W, M)
    return z1, a1, z2, a2, logits


def forward(model: MHeadsModel, image: RgbImage) -> list[LogitMap]:
    """Logit map of every head at the input resolution."""
    logits = _forward_cache(model, image.data)[4]
    return [LogitMap(logits[:, :, m]) for m in range(model.head_count)]


def bce_loss(s: SaliencyMap, y: SoftLabelMap, eps: float = 1e-7) -> float:
    """Mean binary cross-entropy with outputs clamped to [eps, 1-eps]."""
    if not (0.0 < eps < 0.1):
        raise ValueError(f"clamp epsilon must lie in (0, 0.1), got {eps}")
    if s.data.shape != y.data.shape:
        raise ValueError(f"shape mismatch: {s.data.shape} vs {y.data.shape}")
    clamped = np.clip(s.data, eps, 1.0 - eps)
    yv = y.data
    return float(-(yv * np.log(clamped) + (1.0 - yv) * np.log1p(-clamped)).mean())


def _loss_and_grad_arrays(model, x, y, cfg: TrainConfig, frozen_u=None, frozen_w=None):
    """Core loss/gradient computation on raw arrays.

    frozen_u / frozen_w override the uncertainty map and the head weights
    (both already constants for backprop); passing the base-point values
    keeps finite differences consistent with the stop-gradient semantics.
    """
    z1, a1, z2, a2, logits = _forward_cache(model, x)
    m = model.head_count
    n = y.size
    eps = cfg.bce_clamp_epsilon

    if cfg.uats_enabled:
        if frozen_u is None:
            plain = _stable_sigmoid(logits)
            u = head_spread(plain, axis=2)
        else:
            u = frozen_u
        temperature = np.exp(cfg.alpha * u)[:, :, None]
    else:
        u = np.zeros(y.shape)
        temperature = 1.0

    s = _stable_sigmoid(logits / temperature)
    clamped = np.clip(s, eps, 1.0 - eps)
    yv = y[:, :, None]
    ce = -(yv * np.log(clamped) + (1.0 - yv) * np.log1p(-clamped))

    if cfg.head_loss == "wta":
        if frozen_w is None:
            w = np.full_like(ce, cfg.wta_epsilon / (m - 1))
            winner = ce.argmin(axis=2)
            np.put_along_axis(w, winner[:, :, None], 1.0 - cfg.wta_epsilon, axis=2)
        else:
            w = frozen_w
        loss = float((w * ce).sum(axis=2).mean())
        dscale = w / n
    else:
        w = None
        loss = float(ce.mean())
        dscale = 1.0 / (n * m)

    # d(loss)/d(s), zero where the clamp is active.
    ds = np.where(
        (s > eps) & (s < 1.0 - eps),
        -(yv / clamped - (1.0 - yv) / (1.0 - clamped)) * dscale,
        0.0,
    )
    dlogits = ds * s * (1.0 - s) / temperature

    dhead_w = np.tensordot(dlogits, a2, axes=([0, 1], [0, 1]))  # (M, 8)
    dhead_b = dlogits.sum(axis=(0, 1))
    da2 = dlogits @ model.head_w
    dz2 = da2 * (z2 > 0.0)
    dconv2_w, dconv2_b, da1 = _conv3x3_backward(a1, model.conv2_w, dz2)
    dz1 = da1 * (z1 > 0.0)
    dconv1_w, dconv1_b, _ = _conv3x3_backward(x, model.conv1_w, dz1)

    grads = Gradients(dconv1_w, dconv1_b, dconv2_w, dconv2_b, dhead_w, dhead_b)
    return loss, grads, u, w


def loss_and_grad(
    model: MHeadsModel, image: RgbImage, label, cfg: TrainConfig
) -> tuple[float, Gradients]:
    """Mean-over-heads BCE and exact parameter gradients for one sample."""
    if label.data.shape != image.data.shape[:2]:
        raise ValueError(
            f"label/image shape mismatch: {label.data.shape} vs {image.data.shape[:2]}"
        )
    loss, grads = _loss_and_grad_arrays(model, image.data, label.data, cfg)[:2]
    return loss, grads


def sgd_step(
    model: MHeadsModel,
    grads: Gradients,
    state: OptimizerState,
    lr: float,
    momentum: float,
) -> None:
    """In-place momentum update: v <- momentum*v + g; p <- p - lr*v."""
    params = model.param_arrays()
    gs = grads.param_arrays()
    if len(state.velocities) != len(params):
        raise ValueError("optimizer state does not match the model")
    for p, g, v in zip(params, gs, state.velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch in update: {p.shape} vs {g.shape} vs {v.shape}")
        v *= momentum
        v += g
        p -= lr * v


def predict(
    model: MHeadsModel,
    image: RgbImage,
    uats_enabled: bool = False,
    alpha: float = DEFAULT_ALPHA,
) -> tuple[SaliencyMap, UncertaintyMap]:
    """Head-averaged saliency map plus the head-variance uncertainty map."""
    _check_alpha(alpha)
    logits = _forward_cache(model, image.data)[4]
    plain = _stable_sigmoid(logits)
    u = head_spread(plain, axis=2)
    if uats_enabled:
        temperature = np.exp(alpha * u)[:, :, None]
        softened = _stable_sigmoid(logits / temperature)
        final = softened.mean(axis=2)
    else:
        final = plain.mean(axis=2)
    return SaliencyMap(final), UncertaintyMap(u)


@dataclass(frozen=True)
class EvalMetrics:
    mae: float
    max_f: float
    calibration_c: float


def evaluate_model(model: MHeadsModel, samples, cfg: TrainConfig) -> EvalMetrics:
    """Dataset metrics on (image, mask) pairs, predictions snapped to 8 bits."""
    maes = []
    curves = []
    pairs = []
    for image, mask in samples:
        pred, _ = predict(model, image, uats_enabled=cfg.uats_enabled, alpha=cfg.alpha)
        pred = snap_to_u8_grid(pred)
        maes.append(metrics.mae(pred, mask))
        curves.append(metrics.fbeta_curve(pred, mask))
        pairs.append((pred, mask))
    max_f, _, _ = metrics.dataset_fbeta(curves)
    report = calib.dataset_calibration(pairs)
    return EvalMetrics(
        mae=float(np.mean(maes)), max_f=max_f, calibration_c=report.dataset_c
    )


def train(
    model: MHeadsModel, train_set, eval_set, cfg: TrainConfig
) -> tuple[MHeadsModel, TrainHistory]:
    """SGD over shuffled samples; one update per sample, full-image loss.

    train_set holds (RgbImage, label-map) pairs where the label may be a
    binary mask, one smoothed map, or several augmented entries for the
    same image. eval_set holds (RgbImage, BinaryMask) pairs.
    """
    train_set = list(train_set)
    eval_set = list(eval_set)
    if not train_set or not eval_set:
        raise ValueError("training and evaluation sets must be non-empty")

    state = OptimizerState.for_model(model)
    order_rng = SplitMix64(cfg.seed)
    history = TrainHistory()
    for _ in range(cfg.epochs):
        order = list(range(len(train_set)))
        order_rng.shuffle(order)
        losses = []
        for idx in order:
            image, label = train_set[idx]
            loss, grads = loss_and_grad(model, image, label, cfg)
            sgd_step(model, grads, state, cfg.learning_rate, cfg.momentum)
            losses.append(loss)
        history.train_loss.append(math.fsum(losses) / len(losses))
        scores = evaluate_model(model, eval_set, cfg)
        history.eval_mae.append(scores.mae)
        history.eval_max_f.append(scores.max_f)
        history.eval_c.append(scores.calibration_c)
    return model, history


def gradcheck_point(seed: int, uats_enabled: bool, size: int = 16):
    """Deterministic (model, image, label, cfg) suitable for finite differences.

    Central differences at h = 1e-5 are informative only away from ReLU
    kinks (no pre-activation within the perturbation's reach of zero) and
    at a loss small enough that its last-bit rounding stays under the
    relative-error floor. A fresh initialization rarely satisfies both, so
    the model is trained briefly on the probe sample until the point
    qualifies; the search is a pure function of the seed.
    """
    from .synth import SynthConfig, generate_sample

    sample, _ = generate_sample(SynthConfig(count=1, seed=seed, size=size), seed)
    model = init_model(5, seed)
    cfg = TrainConfig(seed=seed, uats_enabled=uats_enabled)
    state = OptimizerState.for_model(model)
    for _ in range(10):
        for _ in range(40):
            _, grads = loss_and_grad(model, sample.image, sample.mask, cfg)
            sgd_step(model, grads, state, cfg.learning_rate, cfg.momentum)
        z1, _, z2, _, _ = _forward_cache(model, sample.image.data)
        loss = _loss_and_grad_arrays(model, sample.image.data, sample.mask.data, cfg)[0]
        if loss < 0.06 and np.abs(z1).min() > 1e-4 and np.abs(z2).min() > 1e-3:
            break
    return model, sample.image, sample.mask, cfg


def gradient_check(
    model: MHeadsModel, image: RgbImage, label, cfg: TrainConfig, h: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every parameter is perturbed. With softening enabled the uncertainty
    map is frozen at its base-point value on both sides, matching the
    stop-gradient semantics of the analytic path.
    """
    x = image.data
    y = label.data
    _, grads, base_u, base_w = _loss_and_grad_arrays(model, x, y, cfg)
    frozen_u = base_u if cfg.uats_enabled else None

    worst = 0.0
    for p, g in zip(model.param_arrays(), grads.param_arrays()):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            original = flat_p[i]
            flat_p[i] = original + h
            plus = _loss_and_grad_arrays(model, x, y, cfg, frozen_u=frozen_u, frozen_w=base_w)[0]
            flat_p[i] = original - h
            minus = _loss_and_grad_arrays(model, x, y, cfg, frozen_u=frozen_u, frozen_w=base_w)[0]
            flat_p[i] = original
            fd = (plus - minus) / (2.0 * h)
            scale = max(1e-8, abs(flat_g[i]) + abs(fd))
            worst = max(worst, abs(flat_g[i] - fd) / scale)
    return worst
