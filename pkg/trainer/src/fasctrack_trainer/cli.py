"""Training CLI: load a dataset, optionally expand it with elastic
augmentation, train one model per class, and export ONNX + curve CSV.
"""

from __future__ import annotations

import argparse
import sys

from .augment import ElasticParams, augment_elastic
from .data import DatasetTooSmall, load_dataset
from .onnx_export import ExportError, export_onnx
from .train import DEFAULT_LR, DEFAULT_PATIENCE, MAX_EPOCHS, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fasctrack-train",
        description="Train a segmentation model and export it for the analysis runtime.",
    )
    parser.add_argument("--data", required=True, help="dataset root (images/ + masks_<class>/)")
    parser.add_argument(
        "--class-kind",
        required=True,
        choices=["aponeurosis", "fascicle"],
        dest="class_kind",
    )
    parser.add_argument("--out", required=True, help="output ONNX model path")
    parser.add_argument("--curves", help="training-curve CSV path")
    parser.add_argument("--checkpoint", help="optional torch checkpoint path (.pt)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=MAX_EPOCHS, help=f"max {MAX_EPOCHS}")
    parser.add_argument("--patience", type=int, default=DEFAULT_PATIENCE)
    parser.add_argument("--lr", type=float, default=DEFAULT_LR)
    parser.add_argument("--base-channels", type=int, default=64, dest="base_channels")
    parser.add_argument(
        "--augment",
        type=int,
        default=0,
        help="elastically deformed copies to add per sample",
    )
    parser.add_argument("--elastic-alpha", type=float, default=ElasticParams.alpha)
    parser.add_argument("--elastic-sigma", type=float, default=ElasticParams.sigma)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        samples = load_dataset(args.data, args.class_kind)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.augment > 0:
        params = ElasticParams(alpha=args.elastic_alpha, sigma=args.elastic_sigma)
        extra = [
            augment_elastic(s, params, seed=args.seed * 10_000 + i)
            for i, s in enumerate(samples * args.augment)
        ]
        samples = samples + extra
    print(f"training on {len(samples)} samples ({args.class_kind})")
    try:
        run, model = train(
            samples,
            args.class_kind,
            seed=args.seed,
            base_channels=args.base_channels,
            max_epochs=args.epochs,
            patience=args.patience,
            lr=args.lr,
            checkpoint_path=args.checkpoint,
        )
    except (DatasetTooSmall, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"finished after {run.epochs_completed} epoch(s) "
        f"({run.stop_reason}); best val loss {run.best_val_loss:.4f} "
        f"at epoch {run.best_epoch}"
    )
    if args.curves:
        run.write_curves(args.curves)
        print(f"curves -> {args.curves}")
    try:
        export_onnx(model, args.out)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"model -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
