"""Translate cell point annotations into trainable ground-truth maps.

Three formats are supported: ``circle`` (one-hot discs around centroids),
``hard_is`` (one-hot instance masks, discs where no instance exists) and
``soft_is`` (unit-peak Gaussians restricted to nucleus support).
"""
from __future__ import annotations

import numpy as np

from .data import BACKGROUND_CELL, TUMOR_CELL, GroundTruthMaps
from .errors import DataError, ParameterError

DEFAULT_RADIUS_PX = 7
DEFAULT_SIGMA_PX = 15.0


def um_to_px(um, mpp):
    return um / mpp


def _one_hot(class_map):
    return np.stack([class_map == c for c in (0, BACKGROUND_CELL, TUMOR_CELL)]).astype(np.float64)


def _nearest_owner(pts, h, w, radius_px):
    """Index of the nearest centroid within ``radius_px`` for each pixel, -1 if none.

    Ties keep the lower annotation index.
    """
    owner = np.full((h, w), -1, dtype=np.int64)
    best = np.full((h, w), np.inf)
    r2 = float(radius_px) ** 2
    pad = int(np.ceil(radius_px))
    for i, (x, y) in enumerate(pts.xy):
        x0, x1 = max(int(np.floor(x)) - pad, 0), min(int(np.ceil(x)) + pad + 1, w)
        y0, y1 = max(int(np.floor(y)) - pad, 0), min(int(np.ceil(y)) + pad + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        d2 = (xx - x) ** 2 + (yy - y) ** 2
        win_best = best[y0:y1, x0:x1]
        take = (d2 <= r2) & (d2 < win_best)
        win_best[take] = d2[take]
        owner[y0:y1, x0:x1][take] = i
    return owner


def _circle_classes(pts, h, w, radius_px):
    owner = _nearest_owner(pts, h, w, radius_px)
    classes = np.zeros((h, w), dtype=np.int64)
    hit = owner >= 0
    classes[hit] = pts.class_id[owner[hit]]
    return classes


def circle_gt(pts, h, w, radius_px=DEFAULT_RADIUS_PX):
    """Discs of ``radius_px`` around every centroid; overlaps go to the nearer centroid."""
    if radius_px < 1:
        raise ParameterError("radius_px must be >= 1")
    return GroundTruthMaps(_one_hot(_circle_classes(pts, h, w, radius_px)), "circle")


def hard_is_gt(inst, pts, h, w, radius_px=DEFAULT_RADIUS_PX):
    """Paint matched instances with their cell class; unmatched cells fall back to discs.

    Fallback discs never overwrite pixels of a painted instance.
    """
    if radius_px < 1:
        raise ParameterError("radius_px must be >= 1")
    labels = inst.instances
    if labels.shape != (h, w):
        raise DataError(f"instance map {labels.shape} does not match patch {(h, w)}")
    if len(inst.matched) != len(pts):
        raise DataError(f"{len(inst.matched)} match entries for {len(pts)} annotations")

    lut = np.zeros(int(labels.max()) + 1, dtype=np.int64)
    for lab in sorted({m for m in inst.matched if m is not None}):
        if lab not in inst.instance_class:
            raise DataError(f"instance {lab} has no class mapping")
        lut[lab] = inst.instance_class[lab]
    classes = lut[labels]

    unmatched = inst.unmatched
    if unmatched.any():
        fallback = _circle_classes(pts.subset(unmatched), h, w, radius_px)
        free = classes == 0
        classes[free] = fallback[free]
    return GroundTruthMaps(_one_hot(classes), "hard_is")


def gaussian_peaks(pts, h, w, sigma_px):
    """Per class, the pixel-wise max of unit-peak Gaussians; shape ``(2, H, W)``."""
    out = np.zeros((2, h, w))
    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    inv = 1.0 / (2.0 * sigma_px ** 2)
    for (x, y), c in zip(pts.xy, pts.class_id):
        g = np.outer(np.exp(-(ys - y) ** 2 * inv), np.exp(-(xs - x) ** 2 * inv))
        ch = out[c - 1]
        np.maximum(ch, g, out=ch)
    return out


def background_channel(cell_channels):
    """``1 - sum`` over cell channels, clamped to ``[0, 1]``."""
    return np.clip(1.0 - np.asarray(cell_channels).sum(axis=0), 0.0, 1.0)


def soft_is_gt(pts, inst=None, h=None, w=None, sigma_px=DEFAULT_SIGMA_PX,
               fallback_radius_px=DEFAULT_RADIUS_PX):
    """Soft instance-segmentation probability maps.

    Same-class Gaussians combine by maximum. With an instance map, values
    outside every instance are zeroed, except inside a ``fallback_radius_px``
    disc around cells that have no instance. Where the two cell channels sum
    above 1 they are rescaled to sum to 1.
    """
    if not sigma_px > 0:
        raise ParameterError("sigma_px must be positive")
    if h is None or w is None:
        if inst is None:
            raise ParameterError("patch size required when no instance map is given")
        h, w = inst.instances.shape
    cells = gaussian_peaks(pts, h, w, sigma_px)
    if inst is not None:
        if inst.instances.shape != (h, w):
            raise DataError(f"instance map {inst.instances.shape} does not match patch {(h, w)}")
        support = inst.instances > 0
        unmatched = inst.unmatched
        if unmatched.any():
            support |= _nearest_owner(pts.subset(unmatched), h, w, fallback_radius_px) >= 0
        cells *= support
    total = cells.sum(axis=0)
    over = total > 1.0
    if over.any():
        cells[:, over] /= total[over]
    bg = background_channel(cells)
    return GroundTruthMaps(np.concatenate([bg[None], cells]), "soft_is")


def make_gt(fmt, pts, h, w, inst=None, radius_px=DEFAULT_RADIUS_PX, sigma_px=DEFAULT_SIGMA_PX):
    """Dispatch on format name."""
    if fmt == "circle":
        return circle_gt(pts, h, w, radius_px)
    if fmt == "hard_is":
        if inst is None:
            return GroundTruthMaps(circle_gt(pts, h, w, radius_px).maps, "hard_is")
        return hard_is_gt(inst, pts, h, w, radius_px)
    if fmt == "soft_is":
        return soft_is_gt(pts, inst, h, w, sigma_px, fallback_radius_px=radius_px)
    raise ParameterError(f"unknown ground-truth format {fmt!r}")

