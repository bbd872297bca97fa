"""Numpy/scipy fallback for the compiled labeling kernels.

Mirrors fasctrack._ccl exactly: same functions, dtypes, and pixel
ordering (label-major, raster order within a label).
"""

import numpy as np
from scipy import ndimage

_EIGHT_CONNECTED = np.ones((3, 3), dtype=np.uint8)


def label_components(mask):
    """Label the 8-connected components of a {0,1} mask.

    Returns (labels, n): an int32 image with 0 = background and components
    numbered 1..n in raster order of first appearance.
    """
    labels, n = ndimage.label(np.asarray(mask) != 0, structure=_EIGHT_CONNECTED)
    return labels.astype(np.int32, copy=False), int(n)


def group_pixels(labels, n):
    """Group set-pixel coordinates by component label.

    Returns (xs, ys, offsets): int32 coordinate arrays ordered by label then
    raster position; component k (1-based) owns xs[offsets[k-1]:offsets[k]].
    """
    ys, xs = np.nonzero(labels)
    lab = np.asarray(labels)[ys, xs]
    order = np.argsort(lab, kind="stable")  # keeps raster order within labels
    xs = xs[order].astype(np.int32, copy=False)
    ys = ys[order].astype(np.int32, copy=False)
    counts = np.bincount(lab, minlength=n + 1)[1 : n + 1]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return xs, ys, offsets
