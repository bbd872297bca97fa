"""Agreement statistics: IoU for masks, Bland-Altman for paired values,
and the two-way random-effects, absolute-agreement, single-measure
intraclass correlation (Shrout-Fleiss form 2,1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateAnova, DimensionMismatch, InsufficientData
from .segmentation import BinaryMask

LOA_MULTIPLIER = 1.96


@dataclass(frozen=True)
class AgreementStats:
    bias: float
    sd_diff: float
    loa_low: float
    loa_high: float
    n: int


@dataclass(frozen=True)
class IccResult:
    icc: float
    ms_rows: float
    ms_cols: float
    ms_error: float
    n: int
    k: int


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two masks; two empty masks agree fully (1.0)."""
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(
            f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}"
        )
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        return 1.0
    return inter / union


def bland_altman(pairs: Sequence[tuple[float, float]]) -> AgreementStats:
    """Bias and 95% limits of agreement of paired measurements.

    Differences are value_a - value_b; the spread uses the sample (n-1)
    standard deviation and the 1.96 normal multiplier.
    """
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be a sequence of (value_a, value_b)")
    n = arr.shape[0]
    if n < 2:
        raise InsufficientData(f"need at least 2 pairs, got {n}")
    diff = arr[:, 0] - arr[:, 1]
    bias = float(diff.mean())
    sd = float(diff.std(ddof=1))
    return AgreementStats(
        bias=bias,
        sd_diff=sd,
        loa_low=bias - LOA_MULTIPLIER * sd,
        loa_high=bias + LOA_MULTIPLIER * sd,
        n=n,
    )


def icc_2_1(data) -> IccResult:
    """ICC(2,1) from an n-targets by k-raters matrix with no missing cells.

    Mean squares come from the standard two-way ANOVA decomposition:
    ICC = (MSR - MSE) / (MSR + (k-1) MSE + k (MSC - MSE) / n).
    """
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("data must be a 2D matrix")
    n, k = m.shape
    if n < 2 or k < 2:
        raise InsufficientData(f"need at least a 2x2 matrix, got {n}x{k}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix cells must be finite (no missing values)")
    grand = m.mean()
    row_means = m.mean(axis=1)
    col_means = m.mean(axis=0)
    ms_rows = k * float(((row_means - grand) ** 2).sum()) / (n - 1)
    ms_cols = n * float(((col_means - grand) ** 2).sum()) / (k - 1)
    residual = m - row_means[:, None] - col_means[None, :] + grand
    ms_error = float((residual**2).sum()) / ((n - 1) * (k - 1))
    denom = ms_rows + (k - 1) * ms_error + k * (ms_cols - ms_error) / n
    if denom == 0.0:
        raise DegenerateAnova("no variance anywhere in the matrix")
    return IccResult(
        icc=(ms_rows - ms_error) / denom,
        ms_rows=ms_rows,
        ms_cols=ms_cols,
        ms_error=ms_error,
        n=n,
        k=k,
    )
