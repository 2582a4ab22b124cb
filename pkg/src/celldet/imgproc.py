"""Deterministic raster primitives used by ground-truth synthesis and postprocessing.

All functions are pure. Single-channel rasters are ``(H, W)`` arrays; where a
function accepts stacks, the last two axes are spatial.
"""
from __future__ import annotations

import heapq
import math

import numpy as np
from scipy import ndimage

from .errors import BoundsError, DegenerateInputError, ParameterError

_EIGHT = np.ones((3, 3), dtype=bool)
# row, col offsets in a fixed order; the flood visits neighbours in this order
_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def gaussian_kernel(sigma_px):
    """Half of a normalised, symmetric Gaussian kernel truncated at ``ceil(4 sigma)``.

    Returns weights ``w[0..r]`` such that ``w[0] + 2 * sum(w[1:]) == 1``.
    """
    if not sigma_px > 0:
        raise ParameterError(f"sigma must be positive, got {sigma_px}")
    radius = int(math.ceil(4.0 * sigma_px))
    k = np.arange(radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (k / sigma_px) ** 2)
    return w / (w[0] + 2.0 * w[1:].sum())


def _blur_axis(a, half, axis):
    # symmetric pairs are summed before weighting so that mirrored inputs give
    # bit-identical mirrored outputs
    radius = len(half) - 1
    n = a.shape[axis]
    pad = [(0, 0)] * a.ndim
    pad[axis] = (radius, radius)
    p = np.pad(a, pad, mode="symmetric")

    def window(start):
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(start, start + n)
        return p[tuple(sl)]

    out = half[0] * a
    for k in range(1, radius + 1):
        out = out + half[k] * (window(radius - k) + window(radius + k))
    return out


def gaussian_blur(r, sigma_px):
    """Separable Gaussian blur with reflective borders.

    The row-then-column and column-then-row passes are averaged, which makes
    the result exactly equivariant under transposition, flips and 90 degree
    rotations of the input.
    """
    half = gaussian_kernel(sigma_px)
    a = np.asarray(r, dtype=np.float64)
    if a.ndim < 2:
        raise ParameterError("raster must have at least two dimensions")
    rows_first = _blur_axis(_blur_axis(a, half, -1), half, -2)
    cols_first = _blur_axis(_blur_axis(a, half, -2), half, -1)
    return 0.5 * (rows_first + cols_first)


def _sample_positions(n_in, n_out):
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def _resize_axis(a, n_out, axis, mode):
    n_in = a.shape[axis]
    pos = _sample_positions(n_in, n_out)
    if mode == "nearest":
        idx = np.clip(np.floor(pos + 0.5).astype(np.intp), 0, n_in - 1)
        return np.take(a, idx, axis=axis)
    if n_in == 1:
        return np.take(a, np.zeros(n_out, dtype=np.intp), axis=axis)
    i0 = np.clip(np.floor(pos).astype(np.intp), 0, n_in - 2)
    frac = pos - i0
    shape = [1] * a.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    return (1.0 - frac) * np.take(a, i0, axis=axis) + frac * np.take(a, i0 + 1, axis=axis)


def resize(r, out_h, out_w, mode="bilinear"):
    """Resize the last two axes with corner-aligned sampling.

    Output pixel ``i`` samples input position ``i * (n_in - 1) / (n_out - 1)``,
    so corner pixels map onto corner pixels.
    """
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"output size must be positive, got {out_h}x{out_w}")
    if mode not in ("nearest", "bilinear"):
        raise ParameterError(f"unknown resize mode {mode!r}")
    a = np.asarray(r)
    if mode == "bilinear":
        a = a.astype(np.float64, copy=False)
    a = _resize_axis(a, int(out_h), a.ndim - 2, mode)
    return _resize_axis(a, int(out_w), a.ndim - 1, mode)


def crop(r, x0, y0, w, h):
    """Copy of the ``w x h`` window whose top-left pixel is ``(x0, y0)``."""
    a = np.asarray(r)
    H, W = a.shape[-2:]
    if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > W or y0 + h > H:
        raise BoundsError(f"crop window x={x0} y={y0} w={w} h={h} outside {W}x{H} raster")
    return a[..., y0:y0 + h, x0:x0 + w].copy()


def otsu_threshold(r, nbins=256):
    """Otsu threshold over ``nbins`` uniform bins spanning ``[min, max]``.

    Returns the upper edge of the last bin assigned to the low class; pixels
    strictly above it form the high class. Ties go to the lowest split.
    """
    a = np.asarray(r, dtype=np.float64).ravel()
    lo, hi = float(a.min()), float(a.max())
    if not hi > lo:
        raise DegenerateInputError("Otsu threshold undefined for a constant raster")
    counts, edges = np.histogram(a, bins=nbins, range=(lo, hi))
    counts = counts.astype(np.int64)
    levels = np.arange(nbins, dtype=np.int64)
    n0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * levels)[:-1]
    total, s_total = int(counts.sum()), int((counts * levels).sum())
    n1 = total - n0
    # between-class variance up to a positive constant, from exact integer sums
    diff = (total * s0 - n0 * s_total).astype(np.float64)
    denom = (n0 * n1).astype(np.float64)
    score = np.zeros(nbins - 1)
    ok = denom > 0
    score[ok] = diff[ok] ** 2 / denom[ok]
    k = int(np.argmax(score))
    return float(edges[k + 1])


def connected_components(m):
    """8-connected labelling; labels ``1..K`` in raster-scan order of first pixel."""
    labels, _ = ndimage.label(np.asarray(m, dtype=bool), structure=_EIGHT)
    return labels.astype(np.int32)


def remove_small_objects_and_fill_holes(m, min_area):
    """Drop 8-connected components smaller than ``min_area``, then fill holes.

    A hole is a 4-connected background region that does not touch the border.
    """
    if min_area < 0:
        raise ParameterError("min_area must be non-negative")
    m = np.asarray(m, dtype=bool)
    labels = connected_components(m)
    if labels.max() > 0 and min_area > 0:
        area = np.bincount(labels.ravel())
        keep = area >= min_area
        keep[0] = False
        m = keep[labels]
    return ndimage.binary_fill_holes(m)


def euclidean_distance_transform(m):
    """Exact distance from each foreground pixel to the nearest background pixel.

    Background pixels get 0. A mask without any background pixel gets the
    image diagonal ``hypot(H, W)`` everywhere.
    """
    m = np.asarray(m, dtype=bool)
    if m.all():
        return np.full(m.shape, math.hypot(*m.shape))
    if not m.any():
        return np.zeros(m.shape)
    return ndimage.distance_transform_edt(m)


def peak_local_max(r, min_distance, threshold_abs):
    """Greedy local-maximum extraction.

    Candidates are pixels ``>= threshold_abs`` equal to the maximum of the
    ``(2 * floor(min_distance) + 1)``-wide square window around them (so ridge
    saddles between nearby maxima are not candidates). They are visited by
    decreasing value, then row-major order; a candidate is accepted unless an
    accepted peak lies at Euclidean distance ``< min_distance``. Border pixels
    are not excluded.

    Returns an ``(N, 2)`` integer array of ``(x, y)`` in acceptance order.
    """
    if min_distance < 1:
        raise ParameterError("min_distance must be >= 1")
    a = np.asarray(r, dtype=np.float64)
    if a.ndim != 2:
        raise ParameterError("peak_local_max expects a single-channel raster")
    h, w = a.shape
    size = 2 * int(math.floor(min_distance)) + 1
    local_max = ndimage.maximum_filter(a, size=size, mode="constant", cval=-np.inf)
    cand = np.flatnonzero((a >= local_max) & (a >= threshold_abs))
    if cand.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    # flat index already encodes row-major order
    order = np.lexsort((cand, -a.ravel()[cand]))
    cand = cand[order]

    rad = int(math.ceil(min_distance)) - 1
    dy, dx = np.mgrid[-rad:rad + 1, -rad:rad + 1]
    disk = (dy ** 2 + dx ** 2) < min_distance ** 2
    dys, dxs = dy[disk], dx[disk]

    blocked = np.zeros((h, w), dtype=bool)
    peaks = []
    for idx in cand:
        y, x = divmod(int(idx), w)
        if blocked[y, x]:
            continue
        peaks.append((x, y))
        yy, xx = y + dys, x + dxs
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        blocked[yy[ok], xx[ok]] = True
    return np.array(peaks, dtype=np.int64).reshape(-1, 2)


def watershed(elevation, markers, mask=None):
    """Marker-controlled watershed by priority flood.

    Pixels are popped in ascending elevation, first-in-first-out among equal
    elevations; each unlabelled 8-neighbour inside ``mask`` takes the label of
    the pixel that reaches it first. Masked pixels not connected to any marker
    stay 0.
    """
    elev = np.asarray(elevation, dtype=np.float64)
    markers = np.asarray(markers)
    h, w = elev.shape
    mask = np.ones((h, w), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if markers.shape != elev.shape or mask.shape != elev.shape:
        raise ParameterError("elevation, markers and mask must share a shape")
    if np.any((markers != 0) & ~mask):
        raise ParameterError("markers must lie inside the mask")
    out = np.where(mask, markers, 0).astype(np.int32)
    if not out.any():
        return out

    e = elev.ravel().tolist()
    lab = out.ravel()
    msk = mask.ravel().tolist()
    heap = []
    counter = 0
    for p in np.flatnonzero(lab).tolist():
        heap.append((e[p], counter, p))
        counter += 1
    heapq.heapify(heap)
    while heap:
        _, _, p = heapq.heappop(heap)
        y, x = divmod(p, w)
        cur = lab[p]
        for dy, dx in _NEIGHBOURS:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w:
                q = yy * w + xx
                if msk[q] and lab[q] == 0:
                    lab[q] = cur
                    heapq.heappush(heap, (e[q], counter, q))
                    counter += 1
    return lab.reshape(h, w)


def center_of_mass(labels):
    """Per positive label (ascending), mean pixel position rounded half-up.

    Returns ``(ids, xy)`` with ``xy`` an ``(N, 2)`` integer array of ``(x, y)``.
    """
    labels = np.asarray(labels)
    ids = np.unique(labels)
    ids = ids[ids > 0]
    if ids.size == 0:
        return ids, np.zeros((0, 2), dtype=np.int64)
    flat = labels.ravel()
    rows, cols = np.divmod(np.arange(flat.size), labels.shape[1])
    n = np.bincount(flat, minlength=ids.max() + 1)[ids].astype(np.float64)
    sy = np.bincount(flat, weights=rows, minlength=ids.max() + 1)[ids]
    sx = np.bincount(flat, weights=cols, minlength=ids.max() + 1)[ids]
    xy = np.floor(np.stack([sx / n, sy / n], axis=1) + 0.5).astype(np.int64)
    return ids, xy
