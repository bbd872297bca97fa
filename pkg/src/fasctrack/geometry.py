"""Pure 2D numeric primitives for the measurement pipeline.

Coordinates follow raster conventions: x is the column index and grows
rightward, y is the row index and grows downward. All slopes are dy/dx
in this frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateFit

PointsLike = Union[np.ndarray, Sequence["Point2"], Sequence[Sequence[float]]]


class Point2(NamedTuple):
    """A point in image coordinates (x = column, y = row)."""

    x: float
    y: float


@dataclass(frozen=True)
class FittedLine:
    """First-order polynomial y = slope * x + intercept.

    x_min/x_max record the x-extent of the data the line was fitted to;
    evaluation is still valid outside that range (extrapolation).
    """

    slope: float
    intercept: float
    x_min: float
    x_max: float

    def y_at(self, x: float) -> float:
        return self.slope * x + self.intercept


@dataclass(frozen=True, eq=False)
class ColumnPolyline:
    """A path with one y sample per consecutive column.

    ``ys[i]`` is the y value at column ``x_start + i``.
    """

    x_start: int
    ys: np.ndarray

    def __post_init__(self):
        ys = np.asarray(self.ys, dtype=np.float64)
        if ys.ndim != 1 or ys.size == 0:
            raise ValueError("polyline needs at least one column sample")
        if not np.all(np.isfinite(ys)):
            raise ValueError("polyline y values must be finite")
        object.__setattr__(self, "ys", ys)

    def __len__(self) -> int:
        return self.ys.size

    @property
    def x_end(self) -> int:
        """Last column index covered by the path (inclusive)."""
        return self.x_start + self.ys.size - 1

    @property
    def columns(self) -> np.ndarray:
        return np.arange(self.x_start, self.x_start + self.ys.size)

    @property
    def mean_y(self) -> float:
        return float(self.ys.mean())

    def y_at(self, x: float) -> float:
        """Linearly interpolated y at a (possibly fractional) column x."""
        if x < self.x_start or x > self.x_end:
            raise ValueError(f"x={x} outside polyline extent [{self.x_start}, {self.x_end}]")
        return float(np.interp(x, self.columns, self.ys))


@dataclass(frozen=True)
class Calibration:
    """Millimetres per pixel along each image axis."""

    mm_per_px_x: float
    mm_per_px_y: float

    def __post_init__(self):
        if not (self.mm_per_px_x > 0 and self.mm_per_px_y > 0):
            raise ValueError("calibration must be strictly positive")

    @classmethod
    def isotropic(cls, mm_per_px: float) -> "Calibration":
        return cls(mm_per_px, mm_per_px)


def _as_xy(points: PointsLike) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be an (N, 2) array or a sequence of Point2")
    return arr[:, 0], arr[:, 1]


def fit_line_least_squares(points: PointsLike) -> FittedLine:
    """Ordinary least-squares line through 2D points, minimizing y-residuals.

    Raises DegenerateFit for fewer than 2 points or zero x-spread.
    """
    x, y = _as_xy(points)
    if x.size < 2:
        raise DegenerateFit(f"need at least 2 points, got {x.size}")
    x_min, x_max = float(x.min()), float(x.max())
    if x_max == x_min:
        raise DegenerateFit("all points share one x; cannot fit y = f(x)")
    # Centered normal equations for numerical stability.
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    intercept = float(ym - slope * xm)
    return FittedLine(slope=slope, intercept=intercept, x_min=x_min, x_max=x_max)


def line_polyline_intersection(line: FittedLine, apo: ColumnPolyline) -> Optional[Point2]:
    """First crossing of a line with a per-column path, scanning left to right.

    The crossing is located by a sign change of (line_y - apo_y) between
    consecutive columns and refined by linear interpolation. Returns None
    when the line never crosses the path over its extent.
    """
    cols = apo.columns.astype(np.float64)
    diff = line.slope * cols + line.intercept - apo.ys
    zero = np.flatnonzero(diff == 0.0)
    sign_change = np.flatnonzero(diff[:-1] * diff[1:] < 0.0)
    first_zero = zero[0] if zero.size else None
    first_change = sign_change[0] if sign_change.size else None
    if first_zero is None and first_change is None:
        return None
    if first_change is None or (first_zero is not None and first_zero <= first_change):
        i = int(first_zero)
        return Point2(float(cols[i]), float(apo.ys[i]))
    i = int(first_change)
    # Both segments are linear in x over [cols[i], cols[i]+1]; solve for the root.
    t = diff[i] / (diff[i] - diff[i + 1])
    x = float(cols[i] + t)
    y = float(apo.ys[i] + t * (apo.ys[i + 1] - apo.ys[i]))
    return Point2(x, y)


def local_slope(apo: ColumnPolyline, x0: int, window_px: int = 50) -> float:
    """Least-squares slope of the path over columns [x0, x0 + window_px).

    The window is truncated at the path end; if fewer than 2 samples
    remain, the window [x0 - window_px, x0] is used instead.
    """
    x0 = int(round(x0))
    if x0 < apo.x_start or x0 > apo.x_end:
        raise ValueError(f"x0={x0} outside polyline extent")
    i0 = x0 - apo.x_start

    fwd = apo.ys[i0 : i0 + window_px]
    if fwd.size >= 2:
        window = fwd
        start = x0
    else:
        back_start = max(0, i0 - window_px)
        window = apo.ys[back_start : i0 + 1]
        start = apo.x_start + back_start
        if window.size < 2:
            raise DegenerateFit("fewer than 2 path samples on both sides of x0")
    cols = np.arange(start, start + window.size, dtype=np.float64)
    return fit_line_least_squares(np.column_stack([cols, window])).slope


def angle_between(fascicle_slope: float, apo_slope: float) -> float:
    """Absolute angle in degrees between two dy/dx slopes, folded into [0, 90]."""
    if not (math.isfinite(fascicle_slope) and math.isfinite(apo_slope)):
        raise ValueError("slopes must be finite")
    deg = abs(math.degrees(math.atan(fascicle_slope) - math.atan(apo_slope)))
    return 180.0 - deg if deg > 90.0 else deg


def calibrated_distance(a: Point2, b: Point2, cal: Calibration) -> float:
    """Euclidean distance in millimetres with per-axis pixel scaling."""
    dx_mm = (a.x - b.x) * cal.mm_per_px_x
    dy_mm = (a.y - b.y) * cal.mm_per_px_y
    return math.hypot(dx_mm, dy_mm)
