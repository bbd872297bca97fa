"""Mask-to-measurement pipeline: aponeurosis detection, fascicle
geometry, muscle thickness, and per-frame aggregation.

This is the measurement core. Inputs are the two binary masks for a
frame (in original image coordinates); outputs are classified
aponeuroses, per-fascicle length/pennation/extent records, central
thickness, and a per-frame aggregate.
"""

from __future__ import annotations

import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .errors import DegenerateFit, InsufficientAponeuroses
from .geometry import (
    Calibration,
    ColumnPolyline,
    FittedLine,
    angle_between,
    calibrated_distance,
    fit_line_least_squares,
    line_polyline_intersection,
    local_slope,
)
from .ingest import MODEL_SIZE, Frame, FrameSequence, resize_for_model, upsample_nearest
from .segmentation import (
    APONEUROSIS,
    FASCICLE,
    BinaryMask,
    MaskFileBackend,
    binarize,
)

SUPERFICIAL = "superficial"
DEEP = "deep"

# Least-squares window for lateral aponeurosis extrapolation, and the
# local-slope window pennation is measured against.
EXTRAPOLATION_WINDOW_PX = 50
PENNATION_WINDOW_PX = 50

# Fragments narrower than this are treated as near-vertical speckle and
# never line-fitted.
MIN_FRAGMENT_X_SPREAD_PX = 5


@dataclass(frozen=True, eq=False)
class ComponentBlob:
    """One 8-connected set of mask pixels."""

    xs: np.ndarray  # int32 columns
    ys: np.ndarray  # int32 rows

    @property
    def pixel_count(self) -> int:
        return self.xs.size

    @property
    def bounding_box(self) -> tuple[int, int, int, int]:
        """(min_x, min_y, max_x, max_y), inclusive."""
        return (
            int(self.xs.min()),
            int(self.ys.min()),
            int(self.xs.max()),
            int(self.ys.max()),
        )

    @property
    def x_extent(self) -> int:
        """Number of columns spanned."""
        return int(self.xs.max()) - int(self.xs.min()) + 1

    def points(self) -> np.ndarray:
        return np.column_stack([self.xs, self.ys]).astype(np.float64)


@dataclass(frozen=True, eq=False)
class Aponeurosis:
    role: str  # SUPERFICIAL or DEEP
    path: ColumnPolyline  # full-width path after lateral extrapolation
    extrapolated_left: int
    extrapolated_right: int
    source_extent: tuple[int, int]


@dataclass(frozen=True, eq=False)
class FascicleFragment:
    blob: ComponentBlob
    line: FittedLine


@dataclass(frozen=True)
class FascicleMeasurement:
    length_mm: float
    pennation_deg: float
    x_start: float  # deep intersection column
    x_end: float  # superficial intersection column
    y_start: float
    y_end: float
    fragment_id: int


@dataclass
class FrameResult:
    index: int
    timestamp_s: Optional[float] = None
    thickness_mm: Optional[float] = None
    fascicles: list[FascicleMeasurement] = field(default_factory=list)
    aggregate_length_mm: Optional[float] = None
    aggregate_pennation_deg: Optional[float] = None
    aggregation_kind: str = "median"
    gap_filled: bool = False
    note: Optional[str] = None  # data conditions, e.g. no usable aponeuroses
    error: Optional[str] = None  # per-frame failures (backend/IO)
    superficial: Optional[Aponeurosis] = None
    deep: Optional[Aponeurosis] = None


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the mask-to-measurement stage.

    Length thresholds are expressed at 512-px image width and scaled
    proportionally for other frame sizes.
    """

    calibration: Calibration = Calibration.isotropic(1.0)
    apo_min_length_px: float = 200.0
    fascicle_min_length_px: float = 40.0
    binarize_threshold: float = 0.5
    slope_bound: float = 3.5
    thickness_band_fraction: float = 0.10
    aggregation: str = "median"  # or "mean"
    gap_fill_max_gap: int = 0  # 0 disables gap filling
    workers: int = 1


def extract_components(mask: BinaryMask) -> list[ComponentBlob]:
    """All maximal 8-connected blobs, largest pixel count first."""
    labels, n = kernels.label_components(mask.bits)
    if n == 0:
        return []
    xs, ys, offsets = kernels.group_pixels(labels, n)
    blobs = [
        ComponentBlob(xs=xs[offsets[i] : offsets[i + 1]], ys=ys[offsets[i] : offsets[i + 1]])
        for i in range(n)
    ]
    blobs.sort(
        key=lambda b: (-b.pixel_count, int(b.ys.min()), int(b.xs.min()))
    )
    return blobs


def _centreline(blob: ComponentBlob) -> ColumnPolyline:
    """Per-column mean y over the blob's (consecutive) column span."""
    x0 = int(blob.xs.min())
    span = blob.x_extent
    rel = blob.xs - x0
    counts = np.bincount(rel, minlength=span)
    sums = np.bincount(rel, weights=blob.ys.astype(np.float64), minlength=span)
    return ColumnPolyline(x_start=x0, ys=sums / counts)


def _edge_slope(path: ColumnPolyline, left: bool, window_px: int) -> float:
    n = min(window_px, len(path))
    if n < 2:
        return 0.0
    ys = path.ys[:n] if left else path.ys[-n:]
    x0 = path.x_start if left else path.x_end - n + 1
    cols = np.arange(x0, x0 + n, dtype=np.float64)
    return fit_line_least_squares(np.column_stack([cols, ys])).slope


def _extrapolate_full_width(path: ColumnPolyline, image_width: int) -> ColumnPolyline:
    """Extend a path to columns [0, image_width) using its outer-window slopes."""
    left_pad = path.x_start
    right_pad = image_width - 1 - path.x_end
    parts = []
    if left_pad > 0:
        slope = _edge_slope(path, left=True, window_px=EXTRAPOLATION_WINDOW_PX)
        dx = np.arange(-left_pad, 0, dtype=np.float64)
        parts.append(path.ys[0] + slope * dx)
    parts.append(path.ys)
    if right_pad > 0:
        slope = _edge_slope(path, left=False, window_px=EXTRAPOLATION_WINDOW_PX)
        dx = np.arange(1, right_pad + 1, dtype=np.float64)
        parts.append(path.ys[-1] + slope * dx)
    return ColumnPolyline(x_start=0, ys=np.concatenate(parts))


def detect_aponeuroses(
    mask: BinaryMask, min_length_px: float, image_width: int
) -> tuple[Aponeurosis, Aponeurosis]:
    """Classify the superficial and deep aponeurosis from the apo mask.

    Components shorter than ``min_length_px`` columns are discarded; each
    survivor is reduced to its per-column mean-y centreline. The topmost
    centreline is superficial; the bottommost one below it whose x-extent
    overlaps the superficial's by at least half is deep. Both paths are
    extrapolated laterally to the full image width.
    """
    survivors = [
        blob
        for blob in extract_components(mask)
        if blob.x_extent >= min_length_px
    ]
    if len(survivors) < 2:
        raise InsufficientAponeuroses(
            f"{len(survivors)} aponeurosis candidate(s) after length threshold"
        )
    paths = [_centreline(blob) for blob in survivors]
    sup_i = min(range(len(paths)), key=lambda i: paths[i].mean_y)
    sup_path = paths[sup_i]

    def overlap_fraction(p: ColumnPolyline) -> float:
        lo = max(p.x_start, sup_path.x_start)
        hi = min(p.x_end, sup_path.x_end)
        return max(0, hi - lo + 1) / len(p)

    candidates = [
        i
        for i, p in enumerate(paths)
        if i != sup_i and p.mean_y > sup_path.mean_y and overlap_fraction(p) >= 0.5
    ]
    if not candidates:
        raise InsufficientAponeuroses(
            "no deep candidate below the superficial aponeurosis with enough overlap"
        )
    deep_i = max(candidates, key=lambda i: paths[i].mean_y)
    deep_path = paths[deep_i]

    def build(path: ColumnPolyline, role: str) -> Aponeurosis:
        full = _extrapolate_full_width(path, image_width)
        return Aponeurosis(
            role=role,
            path=full,
            extrapolated_left=path.x_start,
            extrapolated_right=image_width - 1 - path.x_end,
            source_extent=(path.x_start, path.x_end),
        )

    return build(sup_path, SUPERFICIAL), build(deep_path, DEEP)


def detect_fascicle_fragments(
    mask: BinaryMask,
    min_length_px: float,
    slope_bound: float = 3.5,
) -> list[FascicleFragment]:
    """Line-fit every fascicle blob spanning at least ``min_length_px`` columns.

    Near-vertical blobs (x-spread under MIN_FRAGMENT_X_SPREAD_PX), fits
    steeper than ``slope_bound``, and degenerate fits are dropped.
    """
    fragments = []
    for blob in extract_components(mask):
        if blob.x_extent < min_length_px or blob.x_extent < MIN_FRAGMENT_X_SPREAD_PX:
            continue
        try:
            line = fit_line_least_squares(blob.points())
        except DegenerateFit:
            continue
        if abs(line.slope) > slope_bound:
            continue
        fragments.append(FascicleFragment(blob=blob, line=line))
    return fragments


def measure_fascicle(
    frag: FascicleFragment,
    superficial: Aponeurosis,
    deep: Aponeurosis,
    cal: Calibration,
    fragment_id: int = 0,
) -> Optional[FascicleMeasurement]:
    """Extend a fragment's line to both aponeuroses and measure it.

    Returns None when the line misses either path over its extrapolated
    extent (the fragment is discarded), or the two intersections coincide.
    """
    deep_pt = line_polyline_intersection(frag.line, deep.path)
    sup_pt = line_polyline_intersection(frag.line, superficial.path)
    if deep_pt is None or sup_pt is None:
        return None
    length_mm = calibrated_distance(deep_pt, sup_pt, cal)
    if length_mm <= 0.0:
        return None
    try:
        apo_slope = local_slope(deep.path, int(round(deep_pt.x)), PENNATION_WINDOW_PX)
    except DegenerateFit:
        return None
    return FascicleMeasurement(
        length_mm=length_mm,
        pennation_deg=angle_between(frag.line.slope, apo_slope),
        x_start=deep_pt.x,
        x_end=sup_pt.x,
        y_start=deep_pt.y,
        y_end=sup_pt.y,
        fragment_id=fragment_id,
    )


def thickness_band(image_width: int, band_fraction: float) -> tuple[int, int]:
    """Inclusive column range of the central thickness band."""
    half = band_fraction / 2.0
    lo = int(round(image_width * (0.5 - half)))
    hi = int(round(image_width * (0.5 + half)))
    return max(0, lo), min(image_width - 1, hi)


def _point_to_path_distance_mm(
    px: float, py: float, path: ColumnPolyline, cal: Calibration
) -> float:
    """Distance from one point to a polyline, both scaled to millimetres."""
    qx = (path.columns - px) * cal.mm_per_px_x
    qy = (path.ys - py) * cal.mm_per_px_y
    # Point-to-segment over consecutive samples keeps the path continuous.
    ax, ay = qx[:-1], qy[:-1]
    dx, dy = np.diff(qx), np.diff(qy)
    seg_len2 = dx * dx + dy * dy
    t = np.clip(-(ax * dx + ay * dy) / np.where(seg_len2 == 0, 1.0, seg_len2), 0.0, 1.0)
    cx = ax + t * dx
    cy = ay + t * dy
    d2 = cx * cx + cy * cy
    if len(path) == 1:
        return float(np.hypot(qx[0], qy[0]))
    return float(np.sqrt(d2.min()))


def measure_thickness(
    superficial: Aponeurosis,
    deep: Aponeurosis,
    cal: Calibration,
    image_width: int,
    band_fraction: float = 0.10,
) -> float:
    """Shortest superficial-to-deep distance over the central column band.

    For every band column the superficial point (c, sup_y(c)) is projected
    onto the deep path; the band minimum, in millimetres, is the thickness.
    """
    lo, hi = thickness_band(image_width, band_fraction)
    best = np.inf
    for c in range(lo, hi + 1):
        d = _point_to_path_distance_mm(c, superficial.path.y_at(c), deep.path, cal)
        if d < best:
            best = d
    return float(best)


def _aggregate(values: list[float], kind: str) -> float:
    if kind == "median":
        return float(statistics.median(values))
    if kind == "mean":
        return float(statistics.fmean(values))
    raise ValueError(f"unknown aggregation kind {kind!r}")


def _scaled_threshold(threshold_at_512: float, image_width: int) -> float:
    return threshold_at_512 * image_width / MODEL_SIZE


def _masks_for_frame(frame: Frame, backend, config: PipelineConfig):
    if isinstance(backend, MaskFileBackend) or getattr(backend, "kind", "") == "mask-files":
        apo = backend.load(frame.index, APONEUROSIS)
        fasc = backend.load(frame.index, FASCICLE)
    else:
        grid, _, _ = resize_for_model(frame)
        apo_map, fasc_map = backend.infer(grid.astype(np.float32) / 255.0)
        apo = binarize(apo_map, config.binarize_threshold)
        fasc = binarize(fasc_map, config.binarize_threshold)
    out = []
    for mask in (apo, fasc):
        if (mask.height, mask.width) != (frame.height, frame.width):
            mask = BinaryMask(
                bits=upsample_nearest(mask.bits, frame.width, frame.height),
                class_kind=mask.class_kind,
            )
        out.append(mask)
    return out[0], out[1]


def process_frame(frame: Frame, backend, config: PipelineConfig) -> FrameResult:
    """Run segmentation and the full measurement stage for one frame.

    A frame without two usable aponeuroses yields an empty-but-valid
    result; backend errors propagate to the caller.
    """
    result = FrameResult(
        index=frame.index,
        timestamp_s=frame.timestamp_s,
        aggregation_kind=config.aggregation,
    )
    apo_mask, fasc_mask = _masks_for_frame(frame, backend, config)
    try:
        superficial, deep = detect_aponeuroses(
            apo_mask,
            _scaled_threshold(config.apo_min_length_px, frame.width),
            frame.width,
        )
    except InsufficientAponeuroses as exc:
        result.note = str(exc)
        return result
    result.superficial = superficial
    result.deep = deep
    result.thickness_mm = measure_thickness(
        superficial, deep, config.calibration, frame.width, config.thickness_band_fraction
    )
    fragments = detect_fascicle_fragments(
        fasc_mask,
        _scaled_threshold(config.fascicle_min_length_px, frame.width),
        config.slope_bound,
    )
    for i, frag in enumerate(fragments):
        m = measure_fascicle(frag, superficial, deep, config.calibration, fragment_id=i)
        if m is not None:
            result.fascicles.append(m)
    if result.fascicles:
        result.aggregate_length_mm = _aggregate(
            [m.length_mm for m in result.fascicles], config.aggregation
        )
        result.aggregate_pennation_deg = _aggregate(
            [m.pennation_deg for m in result.fascicles], config.aggregation
        )
    return result


def _fill_gaps(results: list[FrameResult], max_gap: int) -> list[FrameResult]:
    """Linearly interpolate aggregates across short zero-fascicle runs.

    Only aggregate length/pennation are synthesized (flagged gap_filled);
    per-fascicle records never are.
    """
    def has_agg(r: FrameResult) -> bool:
        return r.aggregate_length_mm is not None

    out = list(results)
    i = 0
    n = len(out)
    while i < n:
        if has_agg(out[i]) or out[i].fascicles:
            i += 1
            continue
        j = i
        while j < n and not has_agg(out[j]) and not out[j].fascicles:
            j += 1
        run = j - i
        prev_i = i - 1
        if 0 < run <= max_gap and prev_i >= 0 and j < n and has_agg(out[prev_i]) and has_agg(out[j]):
            a, b = out[prev_i], out[j]
            span = j - prev_i
            for k in range(i, j):
                t = (k - prev_i) / span
                filled = replace(
                    out[k],
                    aggregate_length_mm=a.aggregate_length_mm
                    + t * (b.aggregate_length_mm - a.aggregate_length_mm),
                    gap_filled=True,
                )
                if a.aggregate_pennation_deg is not None and b.aggregate_pennation_deg is not None:
                    filled = replace(
                        filled,
                        aggregate_pennation_deg=a.aggregate_pennation_deg
                        + t * (b.aggregate_pennation_deg - a.aggregate_pennation_deg),
                    )
                out[k] = filled
        i = j
    return out


def process_sequence(
    seq: FrameSequence, backend, config: PipelineConfig
) -> list[FrameResult]:
    """Process every frame independently and return results in frame order.

    Per-frame failures become empty results carrying an error note; the
    sequence never aborts. Output is identical for any worker count.
    """
    def guarded(frame: Frame) -> FrameResult:
        try:
            return process_frame(frame, backend, config)
        except Exception as exc:  # noqa: BLE001 - per-frame isolation is the contract
            return FrameResult(
                index=frame.index,
                timestamp_s=frame.timestamp_s,
                aggregation_kind=config.aggregation,
                error=f"{type(exc).__name__}: {exc}",
            )

    workers = max(1, int(config.workers))
    if workers == 1 or len(seq) == 1:
        results = [guarded(f) for f in seq.frames]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(guarded, seq.frames))
    results.sort(key=lambda r: r.index)
    if config.gap_fill_max_gap > 0:
        results = _fill_gaps(results, config.gap_fill_max_gap)
    return results
