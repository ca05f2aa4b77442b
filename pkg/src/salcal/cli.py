"""Command-line pipelines: generate, smooth, train, predict, calibrate, eval.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
failure (gradient check above tolerance). Every run is deterministic given
identical flags, seeds and inputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bds, calib, metrics, net, uats
from .fileio import (
    FormatError,
    read_dmap,
    read_mask_pgm,
    read_pgm,
    load_model,
    save_model,
    write_dmap,
    write_mask_pgm,
    write_report,
    write_saliency_pgm,
)
from .maps import BinaryMask, LogitMap, RgbImage, SaliencyMap, UncertaintyMap, dequantize_u8
from .synth import SynthConfig, generate_dataset

GRADCHECK_TOLERANCE = 1e-4


def _parse_sigmas(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"malformed sigma list {text!r}") from None
    if not values:
        raise ValueError("sigma list is empty")
    return values


def _load_rgb_dmap(path) -> RgbImage:
    arr = read_dmap(path)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise FormatError(f"{path}: expected a 3-channel image DMAP")
    return RgbImage(np.clip(arr, 0.0, 1.0))


def _load_sample_dir(directory: Path) -> list[tuple[str, RgbImage, BinaryMask]]:
    """Pair IMG_<id>.dmap with GT_<id>.pgm by id; every file must pair up."""
    images = {p.stem[4:]: p for p in sorted(directory.glob("IMG_*.dmap"))}
    masks = {p.stem[3:]: p for p in sorted(directory.glob("GT_*.pgm"))}
    if not images:
        raise FormatError(f"no IMG_*.dmap files in {directory}")
    unmatched = set(images) ^ set(masks)
    if unmatched:
        raise FormatError(f"unpaired ids in {directory}: {sorted(unmatched)}")
    return [
        (sample_id, _load_rgb_dmap(images[sample_id]), read_mask_pgm(masks[sample_id]))
        for sample_id in sorted(images)
    ]


def _cmd_gen_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SynthConfig(count=args.count, seed=args.seed, size=args.size)
    for sample in generate_dataset(cfg):
        write_dmap(out / f"IMG_{sample.id}.dmap", sample.image.data)
        write_mask_pgm(out / f"GT_{sample.id}.pgm", sample.mask)
    return 0


def _cmd_bds_smooth(args) -> int:
    mask = read_mask_pgm(args.gt)
    write_dmap(args.out, bds.smooth_label(mask, args.sigma).data)
    return 0


def _cmd_bds_augment(args) -> int:
    sigmas = _parse_sigmas(args.sigmas)
    gt_dir = Path(args.gt_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask_files = sorted(gt_dir.glob("*.pgm"))
    if not mask_files:
        raise FormatError(f"no .pgm files in {gt_dir}")
    for path in mask_files:
        mask = read_mask_pgm(path)
        for sigma, label in zip(sigmas, bds.augment_labels(mask, sigmas)):
            write_dmap(out_dir / f"{path.stem}_sigma{sigma:g}.dmap", label.data)
    return 0


def _cmd_bds_uniform(args) -> int:
    mask = read_mask_pgm(args.gt)
    write_dmap(args.out, bds.uniform_smooth_label(mask, args.radius, args.value).data)
    return 0


def _cmd_train(args) -> int:
    data = _load_sample_dir(Path(args.data))
    if args.labels == "bds":
        sigmas = _parse_sigmas(args.sigmas) if args.sigmas else list(bds.DEFAULT_SIGMAS)
        train_set = [
            (image, label)
            for _, image, mask in data
            for label in bds.augment_labels(mask, sigmas)
        ]
    else:
        train_set = [(image, mask) for _, image, mask in data]

    if args.eval_data:
        eval_set = [(image, mask) for _, image, mask in _load_sample_dir(Path(args.eval_data))]
    else:
        eval_set = [(image, mask) for _, image, mask in data]

    cfg = net.TrainConfig(
        seed=args.seed,
        learning_rate=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        alpha=args.alpha,
        uats_enabled=args.uats == "on",
        head_loss=args.head_loss,
    )
    model = net.init_model(args.heads, args.seed)
    model, history = net.train(model, train_set, eval_set, cfg)
    save_model(args.out, model)
    if args.history:
        import json

        with open(args.history, "w") as fh:
            json.dump(
                {
                    "epochs": cfg.epochs,
                    "train_loss": history.train_loss,
                    "eval_mae": history.eval_mae,
                    "eval_max_f": history.eval_max_f,
                    "eval_c": history.eval_c,
                },
                fh,
                indent=2,
            )
            fh.write("\n")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    image = _load_rgb_dmap(args.image)
    pred, uncertainty = net.predict(
        model, image, uats_enabled=args.uats == "on", alpha=args.alpha
    )
    write_saliency_pgm(args.out_pred, pred)
    if args.out_uncertainty:
        write_dmap(args.out_uncertainty, uncertainty.data)
    if args.out_logits:
        logits = net.forward(model, image)
        write_dmap(args.out_logits, np.stack([z.data for z in logits], axis=2))
    return 0


def _cmd_calibrate_post(args, parser) -> int:
    logits = read_dmap(args.logits)
    if logits.ndim == 2:
        logits = logits[:, :, None]
    height, width = logits.shape[:2]

    if args.mode == "uniform":
        if args.temperature is None:
            parser.error("--mode uniform requires --temperature")
        temperature = uats.uniform_temperature(width, height, args.temperature)
    elif args.mode == "edge":
        if not args.image:
            parser.error("--mode edge requires --image")
        temperature = uats.edge_temperature(_load_rgb_dmap(args.image))
    else:
        if not args.uncertainty:
            parser.error("--mode uncertainty requires --uncertainty")
        u_arr = read_dmap(args.uncertainty)
        if u_arr.ndim != 2:
            raise FormatError(f"{args.uncertainty}: expected a single-channel DMAP")
        temperature = uats.temperature_from_uncertainty(
            UncertaintyMap(np.clip(u_arr, 0.0, 1.0)), args.alpha
        )
    if temperature.data.shape != (height, width):
        raise FormatError(
            f"temperature shape {temperature.data.shape} does not match logits {height}x{width}"
        )

    softened = [
        uats.relaxed_sigmoid(LogitMap(logits[:, :, c]), temperature).data
        for c in range(logits.shape[2])
    ]
    write_saliency_pgm(args.out, SaliencyMap(np.mean(softened, axis=0)))
    return 0


def _cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.pgm"))}
    gts = {p.stem: p for p in sorted(gt_dir.glob("*.pgm"))}
    if not preds:
        raise FormatError(f"no .pgm files in {pred_dir}")
    unmatched = set(preds) ^ set(gts)
    if unmatched:
        raise FormatError(f"unmatched prediction/ground-truth stems: {sorted(unmatched)}")

    stems = sorted(preds)
    per_image_rows = []
    curves = []
    pairs = []
    maes = []
    for stem in stems:
        pred = dequantize_u8(read_pgm(preds[stem]))
        gt = read_mask_pgm(gts[stem])
        image_mae = metrics.mae(pred, gt)
        curve = metrics.fbeta_curve(pred, gt, args.beta2)
        c_i, _ = calib.image_calibration(pred, gt)
        per_image_rows.append((stem, image_mae, curve.max_f, c_i))
        curves.append(curve)
        pairs.append((pred, gt))
        maes.append(image_mae)

    report = calib.dataset_calibration(pairs, ids=stems)
    max_f, mean_f, _ = metrics.dataset_fbeta(curves)
    write_report(
        args.out,
        dataset_mae=float(np.mean(maes)),
        dataset_max_fbeta=max_f,
        dataset_mean_fbeta=mean_f,
        dataset_calibration_c=report.dataset_c,
        per_image=per_image_rows,
        bins=report.bins,
    )
    if args.reliability:
        calib.write_reliability_csv(args.reliability, report.bins)
    return 0


def _cmd_gradcheck(args) -> int:
    model, image, label, cfg = net.gradcheck_point(args.seed, args.uats == "on")
    worst = net.gradient_check(model, image, label, cfg)
    print(f"max relative gradient error: {worst:.3e}")
    if not (worst < GRADCHECK_TOLERANCE):
        print(f"gradient check failed tolerance {GRADCHECK_TOLERANCE:g}", file=sys.stderr)
        return 3
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="salcal",
        description="Calibrated saliency toolkit: label smoothing, "
        "temperature softening, dense calibration measurement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic shape dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, default=48)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("bds", help="boundary label smoothing")
    bds_sub = p.add_subparsers(dest="bds_command", required=True)
    ps = bds_sub.add_parser("smooth", help="smooth one mask with one kernel width")
    ps.add_argument("--gt", required=True)
    ps.add_argument("--sigma", type=float, required=True)
    ps.add_argument("--out", required=True)
    pa = bds_sub.add_parser("augment", help="smooth a mask folder at several widths")
    pa.add_argument("--gt-dir", required=True)
    pa.add_argument("--sigmas", required=True)
    pa.add_argument("--out-dir", required=True)
    pu = bds_sub.add_parser("uniform", help="flat-value band smoothing baseline")
    pu.add_argument("--gt", required=True)
    pu.add_argument("--radius", type=int, default=2)
    pu.add_argument("--value", type=float, default=0.5)
    pu.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the multi-head model")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", default=None)
    p.add_argument("--heads", type=int, default=5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--uats", choices=["on", "off"], default="off")
    p.add_argument("--head-loss", choices=["mean", "wta"], default="mean")
    p.add_argument("--labels", choices=["binary", "bds"], default="binary")
    p.add_argument("--sigmas", default="")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)

    p = sub.add_parser("predict", help="run a saved model on one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--uats", choices=["on", "off"], default="off")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out-pred", required=True)
    p.add_argument("--out-uncertainty", default=None)
    p.add_argument("--out-logits", default=None)

    p = sub.add_parser("calibrate", help="post-hoc temperature softening")
    cal_sub = p.add_subparsers(dest="calibrate_command", required=True)
    pc = cal_sub.add_parser("post", help="soften saved logits with a temperature map")
    pc.add_argument("--logits", required=True)
    pc.add_argument("--mode", choices=["uniform", "edge", "uncertainty"], required=True)
    pc.add_argument("--temperature", type=float, default=None)
    pc.add_argument("--image", default=None)
    pc.add_argument("--uncertainty", default=None)
    pc.add_argument("--alpha", type=float, default=1.0)
    pc.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--beta2", type=float, default=metrics.DEFAULT_BETA2)
    p.add_argument("--out", required=True)
    p.add_argument("--reliability", default=None)

    p = sub.add_parser("gradcheck", help="verify analytic gradients")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--uats", choices=["on", "off"], default="off")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    try:
        if args.command == "gen-synth":
            return _cmd_gen_synth(args)
        if args.command == "bds":
            return {
                "smooth": _cmd_bds_smooth,
                "augment": _cmd_bds_augment,
                "uniform": _cmd_bds_uniform,
            }[args.bds_command](args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "predict":
            return _cmd_predict(args)
        if args.command == "calibrate":
            return _cmd_calibrate_post(args, parser)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        parser.error(f"unknown command {args.command}")
    except SystemExit as exc:  # parser.error inside a handler
        return 0 if exc.code == 0 else 1
    except (FormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
