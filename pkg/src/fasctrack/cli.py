"""Command-line entry point.

``fasctrack analyze``  runs the measurement pipeline over an image or a
frame sequence and writes the results CSV (plus optional overlays).
``fasctrack evaluate`` computes agreement statistics: IoU between two
mask directories, or Bland-Altman/ICC over paired value series.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, metrics, report
from .architecture import process_sequence
from .config import load_config
from .errors import ConfigError, FasctrackError
from .ingest import RASTER_EXTENSIONS, FrameSequence, load_frame_sequence, load_image
from .segmentation import MaskFileBackend, ModelBackend, load_mask_file

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fasctrack",
        description="Muscle architecture measurements from B-mode ultrasound frames.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="measure fascicles/aponeuroses in frames")
    an.add_argument("--image", help="single image to analyse")
    an.add_argument("--video", help="frame directory, or video file if decoder_cmd is configured")
    an.add_argument("--apo-model", dest="apo_model", help="aponeurosis model (ONNX)")
    an.add_argument("--fasc-model", dest="fasc_model", help="fascicle model (ONNX)")
    an.add_argument(
        "--masks-from",
        dest="masks_from",
        help="precomputed mask directory or path template with {class}/{index}",
    )
    an.add_argument("--mm-per-px", dest="mm_per_px", type=float, help="isotropic calibration")
    an.add_argument("--mm-per-px-x", dest="mm_per_px_x", type=float)
    an.add_argument("--mm-per-px-y", dest="mm_per_px_y", type=float)
    an.add_argument("--apo-min-length", dest="apo_min_length", type=float,
                    help="aponeurosis length threshold in px at 512-px width (default 200)")
    an.add_argument("--fasc-min-length", dest="fasc_min_length", type=float,
                    help="fascicle length threshold in px at 512-px width (default 40)")
    an.add_argument("--threshold", type=float, help="binarization threshold (default 0.5)")
    an.add_argument("--aggregate", choices=["median", "mean"],
                    help="per-frame aggregation (default: median for images, mean for videos)")
    an.add_argument("--gap-fill", dest="gap_fill", type=int,
                    help="interpolate aggregates across gaps up to N frames (default 0 = off)")
    an.add_argument("--overlays", help="directory for annotated overlay PNGs")
    an.add_argument("--out", help="results CSV path (default results.csv)")
    an.add_argument("--workers", type=int, help="parallel frame workers (default: cores)")
    an.add_argument("--fps", type=float, help="frames per second for timestamps")
    an.add_argument("--config", help="key=value config file (or $FASCTRACK_CONFIG)")

    ev = sub.add_parser("evaluate", help="agreement statistics between two methods")
    ev.add_argument("--masks-a", dest="masks_a", help="first mask directory (IoU mode)")
    ev.add_argument("--masks-b", dest="masks_b", help="second mask directory (IoU mode)")
    ev.add_argument("--values", help="CSV whose first two numeric columns are the paired series")
    ev.add_argument("--values-a", dest="values_a", help="single-column CSV, method A")
    ev.add_argument("--values-b", dest="values_b", help="single-column CSV, method B")
    ev.add_argument("--out", help="write the metrics report to this file")
    ev.add_argument("--plot", help="write a Bland-Altman scatter PNG (agreement modes)")
    return parser


_ANALYZE_FLAGS = (
    "image",
    "video",
    "apo_model",
    "fasc_model",
    "masks_from",
    "mm_per_px",
    "mm_per_px_x",
    "mm_per_px_y",
    "apo_min_length",
    "fasc_min_length",
    "threshold",
    "aggregate",
    "gap_fill",
    "overlays",
    "out",
    "workers",
    "fps",
)


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(
            {k: getattr(args, k) for k in _ANALYZE_FLAGS}, config_path=args.config
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    try:
        if cfg.masks_from:
            backend = MaskFileBackend(cfg.masks_from)
        else:
            backend = ModelBackend(cfg.apo_model, cfg.fasc_model)
        if cfg.mode == "image":
            frame = load_image(cfg.image)
            seq = FrameSequence(frames=[frame], fps=None)
            stem = Path(cfg.image).stem
        else:
            seq = load_frame_sequence(cfg.video, fps_hint=cfg.fps, decoder_cmd=cfg.decoder_cmd)
            stem = Path(cfg.video).stem or "frames"
        results = process_sequence(seq, backend, cfg.pipeline())
        report.write_results(results, cfg.out)
        if cfg.overlays:
            overlay_dir = Path(cfg.overlays)
            overlay_dir.mkdir(parents=True, exist_ok=True)
            for frame, result in zip(seq.frames, results):
                report.render_overlay(
                    frame, result, report.overlay_path(overlay_dir, stem, result.index)
                )
    except FasctrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    failed = [r for r in results if r.error]
    for r in failed:
        print(f"frame {r.index}: {r.error}", file=sys.stderr)
    n_fasc = sum(len(r.fascicles) for r in results)
    print(f"analyzed {len(results)} frame(s), {n_fasc} fascicle(s) -> {cfg.out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _read_value_column(path, column: int = 0) -> list:
    import csv as _csv

    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in _csv.reader(fh):
            if not row:
                continue
            try:
                values.append(float(row[column]))
            except (ValueError, IndexError):
                continue  # header or empty cell
    return values


def _evaluate_masks(dir_a: Path, dir_b: Path, lines: list) -> None:
    names = sorted(
        p.name
        for p in dir_a.iterdir()
        if p.is_file() and p.suffix.lower() in RASTER_EXTENSIONS
    )
    if not names:
        raise FasctrackError(f"no mask rasters in {dir_a}")
    scores = []
    for name in names:
        other = dir_b / name
        if not other.is_file():
            raise FasctrackError(f"missing counterpart for {name} in {dir_b}")
        a = load_mask_file(dir_a / name, "aponeurosis")
        b = load_mask_file(other, "aponeurosis")
        score = metrics.iou(a, b)
        scores.append(score)
        lines.append(f"iou {name} {score:.6f}")
    lines.append(f"mean_iou {sum(scores) / len(scores):.6f}")


def _evaluate_values(pairs, lines: list, plot_path=None) -> None:
    stats = metrics.bland_altman(pairs)
    lines.append(f"n {stats.n}")
    lines.append(f"bias {stats.bias:.4f}")
    lines.append(f"sd_diff {stats.sd_diff:.4f}")
    lines.append(f"loa_low {stats.loa_low:.4f}")
    lines.append(f"loa_high {stats.loa_high:.4f}")
    try:
        icc = metrics.icc_2_1([[a, b] for a, b in pairs])
        lines.append(f"icc_2_1 {icc.icc:.6f}")
    except FasctrackError as exc:
        lines.append(f"icc_2_1 undefined ({exc})")
    if plot_path:
        report.render_bland_altman_scatter(pairs, stats, plot_path)
        lines.append(f"plot {plot_path}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    lines: list = []
    try:
        if args.masks_a or args.masks_b:
            if not (args.masks_a and args.masks_b):
                raise ConfigError("IoU mode needs both --masks-a and --masks-b")
            _evaluate_masks(Path(args.masks_a), Path(args.masks_b), lines)
        elif args.values:
            a = _read_value_column(args.values, 0)
            b = _read_value_column(args.values, 1)
            if len(a) != len(b):
                raise ConfigError("--values file must have two complete numeric columns")
            _evaluate_values(list(zip(a, b)), lines, plot_path=args.plot)
        elif args.values_a or args.values_b:
            if not (args.values_a and args.values_b):
                raise ConfigError("agreement mode needs both --values-a and --values-b")
            a = _read_value_column(args.values_a)
            b = _read_value_column(args.values_b)
            if len(a) != len(b):
                raise ConfigError("value series differ in length")
            _evaluate_values(list(zip(a, b)), lines, plot_path=args.plot)
        else:
            raise ConfigError(
                "nothing to evaluate: give --masks-a/--masks-b, --values, or --values-a/--values-b"
            )
    except FasctrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL

    text = "\n".join(lines)
    print(text)
    if args.out:
        try:
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_FATAL
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "analyze":
        return cmd_analyze(args)
    return cmd_evaluate(args)


if __name__ == "__main__":
    sys.exit(main())
