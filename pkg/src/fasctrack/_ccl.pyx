# cython: boundscheck=False, wraparound=False, cdivision=True
"""8-connected component labeling and pixel grouping (compiled fast path).

fasctrack.kernels selects this extension when it imports cleanly and
falls back to the numpy/scipy twin in fasctrack._ccl_py otherwise.
Both backends expose identical signatures, dtypes and pixel ordering.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef cnp.int32_t _find(cnp.int32_t[::1] parent, cnp.int32_t i) noexcept nogil:
    cdef cnp.int32_t root = i
    cdef cnp.int32_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


cdef void _union(cnp.int32_t[::1] parent, cnp.int32_t a, cnp.int32_t b) noexcept nogil:
    cdef cnp.int32_t ra = _find(parent, a)
    cdef cnp.int32_t rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


def label_components(mask):
    """Label the 8-connected components of a {0,1} mask.

    Returns (labels, n): an int32 image with 0 = background and components
    numbered 1..n in raster order of first appearance.
    """
    cdef const cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0]
    cdef Py_ssize_t w = m.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] labels = labels_arr
    # Isolated pixels on a sparse grid bound the provisional label count.
    parent_arr = np.zeros(h * w // 4 + h + w + 2, dtype=np.int32)
    cdef cnp.int32_t[::1] parent = parent_arr
    cdef cnp.int32_t next_label = 1
    cdef cnp.int32_t assigned, l
    cdef Py_ssize_t y, x

    with nogil:
        for y in range(h):
            for x in range(w):
                if m[y, x] == 0:
                    continue
                assigned = 0
                if x > 0 and labels[y, x - 1] != 0:
                    assigned = labels[y, x - 1]
                if y > 0:
                    if x > 0:
                        l = labels[y - 1, x - 1]
                        if l != 0:
                            if assigned == 0:
                                assigned = l
                            else:
                                _union(parent, assigned, l)
                    l = labels[y - 1, x]
                    if l != 0:
                        if assigned == 0:
                            assigned = l
                        else:
                            _union(parent, assigned, l)
                    if x + 1 < w:
                        l = labels[y - 1, x + 1]
                        if l != 0:
                            if assigned == 0:
                                assigned = l
                            else:
                                _union(parent, assigned, l)
                if assigned == 0:
                    parent[next_label] = next_label
                    labels[y, x] = next_label
                    next_label += 1
                else:
                    labels[y, x] = _find(parent, assigned)

    # Relabel union-find roots to consecutive ids in raster order.
    remap_arr = np.zeros(next_label, dtype=np.int32)
    cdef cnp.int32_t[::1] remap = remap_arr
    cdef cnp.int32_t n = 0
    cdef cnp.int32_t root
    with nogil:
        for y in range(h):
            for x in range(w):
                l = labels[y, x]
                if l == 0:
                    continue
                root = _find(parent, l)
                if remap[root] == 0:
                    n += 1
                    remap[root] = n
                labels[y, x] = remap[root]
    return labels_arr, int(n)


def group_pixels(labels, n):
    """Group set-pixel coordinates by component label.

    Returns (xs, ys, offsets): int32 coordinate arrays ordered by label then
    raster position; component k (1-based) owns xs[offsets[k-1]:offsets[k]].
    """
    cdef const cnp.int32_t[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.int32)
    cdef Py_ssize_t h = lab.shape[0]
    cdef Py_ssize_t w = lab.shape[1]
    cdef cnp.int32_t nn = n
    counts_arr = np.zeros(nn + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef Py_ssize_t y, x
    cdef cnp.int32_t l
    with nogil:
        for y in range(h):
            for x in range(w):
                l = lab[y, x]
                if l != 0:
                    counts[l] += 1

    offsets_arr = np.zeros(nn + 1, dtype=np.int64)
    offsets_arr[1:] = np.cumsum(counts_arr[1:])
    cdef cnp.int64_t[::1] offsets = offsets_arr
    cursor_arr = offsets_arr[:nn].copy()
    cdef cnp.int64_t[::1] cursor = cursor_arr

    total = int(offsets_arr[nn])
    xs_arr = np.empty(total, dtype=np.int32)
    ys_arr = np.empty(total, dtype=np.int32)
    cdef cnp.int32_t[::1] xs = xs_arr
    cdef cnp.int32_t[::1] ys = ys_arr
    cdef cnp.int64_t pos
    with nogil:
        for y in range(h):
            for x in range(w):
                l = lab[y, x]
                if l != 0:
                    pos = cursor[l - 1]
                    xs[pos] = <cnp.int32_t> x
                    ys[pos] = <cnp.int32_t> y
                    cursor[l - 1] = pos + 1
    return xs_arr, ys_arr, offsets_arr
