"""Result serialization: the per-fascicle CSV table, annotated overlay
images, and paired-series exports for agreement analysis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from PIL import Image, ImageDraw

from .architecture import FrameResult
from .errors import IoError, LengthMismatch
from .ingest import Frame

CSV_HEADER = [
    "frame",
    "timestamp_s",
    "fascicle_id",
    "length_mm",
    "pennation_deg",
    "x_start",
    "x_end",
    "thickness_mm",
    "agg_length_mm",
    "agg_pennation_deg",
    "n_fascicles",
]


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.4f}"


def write_results(results: Sequence[FrameResult], path) -> None:
    """Write the long-format results CSV: one row per fascicle, and one
    row with empty fascicle fields for fascicle-free frames."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in results:
                shared = [
                    _fmt(r.thickness_mm),
                    _fmt(r.aggregate_length_mm),
                    _fmt(r.aggregate_pennation_deg),
                    str(len(r.fascicles)),
                ]
                if r.fascicles:
                    for i, m in enumerate(r.fascicles):
                        writer.writerow(
                            [
                                str(r.index),
                                _fmt(r.timestamp_s),
                                str(i),
                                _fmt(m.length_mm),
                                _fmt(m.pennation_deg),
                                _fmt(m.x_start),
                                _fmt(m.x_end),
                                *shared,
                            ]
                        )
                else:
                    writer.writerow(
                        [str(r.index), _fmt(r.timestamp_s), "", "", "", "", "", *shared]
                    )
    except OSError as exc:
        raise IoError(f"cannot write results to {path}: {exc}") from exc


@dataclass(frozen=True)
class OverlayStyle:
    aponeurosis_color: tuple[int, int, int] = (80, 200, 120)
    fascicle_color: tuple[int, int, int] = (240, 80, 80)
    banner_color: tuple[int, int, int] = (255, 255, 0)
    line_width: int = 2


def _banner_text(result: FrameResult) -> str:
    if not result.fascicles:
        return "no fascicles detected"
    parts = [
        f"L={result.aggregate_length_mm:.2f}mm",
        f"PA={result.aggregate_pennation_deg:.2f}deg",
    ]
    if result.thickness_mm is not None:
        parts.append(f"T={result.thickness_mm:.2f}mm")
    return " ".join(parts)


def render_overlay(
    frame: Frame,
    result: FrameResult,
    path,
    style: OverlayStyle = OverlayStyle(),
) -> None:
    """Draw measured structures over the frame and save as PNG.

    Aponeurosis paths (when detected), each fascicle as the segment
    between its intersection points, and an aggregate banner. Rendering
    never mutates the measurement data and output size equals the frame.
    """
    img = Image.fromarray(frame.pixels, mode="L").convert("RGB")
    draw = ImageDraw.Draw(img)
    for apo in (result.superficial, result.deep):
        if apo is None:
            continue
        pts = list(zip(apo.path.columns.tolist(), apo.path.ys.tolist()))
        draw.line(pts, fill=style.aponeurosis_color, width=style.line_width)
    for m in result.fascicles:
        draw.line(
            [(m.x_start, m.y_start), (m.x_end, m.y_end)],
            fill=style.fascicle_color,
            width=style.line_width,
        )
    draw.text((8, 8), _banner_text(result), fill=style.banner_color)
    try:
        img.save(Path(path), format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write overlay to {path}: {exc}") from exc


def overlay_path(out_dir, stem: str, frame_index: int) -> Path:
    return Path(out_dir) / f"{stem}_overlay_{frame_index}.png"


def export_comparison(
    series_a: Sequence[Optional[float]],
    series_b: Sequence[Optional[float]],
    path,
) -> None:
    """Write per-frame paired values with difference and mean columns.

    Frames where either side is missing keep their row with empty cells
    so downstream stats can exclude them explicitly.
    """
    if len(series_a) != len(series_b):
        raise LengthMismatch(
            f"series lengths differ: {len(series_a)} vs {len(series_b)}"
        )
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["frame", "value_a", "value_b", "difference", "mean"])
            for i, (a, b) in enumerate(zip(series_a, series_b)):
                if a is None or b is None:
                    writer.writerow([str(i), _fmt(a), _fmt(b), "", ""])
                else:
                    writer.writerow(
                        [str(i), _fmt(a), _fmt(b), _fmt(a - b), _fmt((a + b) / 2.0)]
                    )
    except OSError as exc:
        raise IoError(f"cannot write comparison to {path}: {exc}") from exc


def render_bland_altman_scatter(
    pairs: Sequence[tuple[float, float]],
    stats,
    path,
    size: tuple[int, int] = (640, 480),
) -> None:
    """Plain raster scatter of pair means vs differences with bias and
    limits-of-agreement lines. Deterministic pixels for fixed inputs."""
    width, height = size
    img = Image.new("RGB", size, (255, 255, 255))
    draw = ImageDraw.Draw(img)
    means = [(a + b) / 2.0 for a, b in pairs]
    diffs = [a - b for a, b in pairs]
    x_lo, x_hi = min(means), max(means)
    y_lo = min(min(diffs), stats.loa_low)
    y_hi = max(max(diffs), stats.loa_high)
    x_pad = (x_hi - x_lo) * 0.08 or 1.0
    y_pad = (y_hi - y_lo) * 0.08 or 1.0
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad
    margin = 40

    def to_px(mx: float, dy: float) -> tuple[int, int]:
        px = margin + (mx - x_lo) / (x_hi - x_lo) * (width - 2 * margin)
        py = height - margin - (dy - y_lo) / (y_hi - y_lo) * (height - 2 * margin)
        return int(round(px)), int(round(py))

    draw.rectangle(
        [margin, margin, width - margin, height - margin], outline=(0, 0, 0)
    )
    for level, color in (
        (stats.bias, (0, 0, 0)),
        (stats.loa_low, (150, 150, 150)),
        (stats.loa_high, (150, 150, 150)),
    ):
        _, py = to_px(x_lo, level)
        draw.line([(margin, py), (width - margin, py)], fill=color)
    for mx, dy in zip(means, diffs):
        px, py = to_px(mx, dy)
        draw.ellipse([px - 3, py - 3, px + 3, py + 3], outline=(30, 60, 200))
    draw.text(
        (margin + 4, 8),
        f"bias={stats.bias:.4f} loa=[{stats.loa_low:.4f}, {stats.loa_high:.4f}] n={stats.n}",
        fill=(0, 0, 0),
    )
    try:
        img.save(Path(path), format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write scatter to {path}: {exc}") from exc


def read_comparison_pairs(path) -> list[tuple[float, float]]:
    """Read back the complete (value_a, value_b) pairs from a comparison CSV."""
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if row.get("value_a") and row.get("value_b"):
                pairs.append((float(row["value_a"]), float(row["value_b"])))
    return pairs
