"""Joint image / ground-truth / point augmentation and class-balancing sample weights."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import imgproc
from .data import (BACKGROUND_CELL, TISSUE_BACKGROUND, TISSUE_CANCER, TUMOR_CELL,
                   GroundTruthMaps, PointAnnotations)
from .ensemble import GeomTransform
from .errors import ParameterError

log = logging.getLogger(__name__)


@dataclass
class AugmentParams:
    rescale_range: float = 0.10
    crop_hw: int = 896
    brightness_contrast_range: float = 0.20
    per_aug_probability: float = 0.70
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.per_aug_probability <= 1.0:
            raise ParameterError("per_aug_probability must be in [0, 1]")
        if not 0.0 <= self.rescale_range < 1.0:
            raise ParameterError("rescale_range must be in [0, 1)")
        if self.brightness_contrast_range < 0:
            raise ParameterError("brightness_contrast_range must be >= 0")
        if self.crop_hw < 1:
            raise ParameterError("crop_hw must be >= 1")


@dataclass
class AugmentRecord:
    """What was drawn; enough to replay the geometric part on coordinates."""

    scale: float = 1.0
    scaled_hw: tuple = None
    crop_xy: tuple = (0, 0)
    transform: GeomTransform = GeomTransform()
    brightness: np.ndarray = None
    contrast: np.ndarray = None


def map_points(xy, in_hw, rec):
    """Apply a record's rescale and crop to ``(x, y)`` coordinates (not the flip/rotation)."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2).copy()
    h, w = in_hw
    sh, sw = rec.scaled_hw
    xy[:, 0] *= (sw - 1) / (w - 1) if w > 1 else 1.0
    xy[:, 1] *= (sh - 1) / (h - 1) if h > 1 else 1.0
    xy -= np.asarray(rec.crop_xy, dtype=np.float64)
    return xy


def random_augment(img, gts, pts, p, rng=None, photometric_channels=None):
    """Augment an image with its ground-truth maps and annotations.

    Order: rescale, crop (random position when drawn, centred otherwise),
    flip, quarter-turn rotation, brightness, contrast. Each optional step is
    drawn independently with ``p.per_aug_probability``. Geometric steps move
    image, maps and points together; photometric steps touch the image only.
    Points that leave the crop are dropped. ``photometric_channels`` limits
    brightness/contrast to the leading channels (e.g. RGB ahead of appended
    tissue channels).

    Returns ``(img, gts, pts, record)``.
    """
    rng = np.random.default_rng(p.seed) if rng is None else rng
    prob = p.per_aug_probability
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[-2:]
    if gts.maps.shape[-2:] != (h, w):
        raise ParameterError("image and ground truth are not aligned")
    gt_mode = "nearest" if gts.one_hot else "bilinear"
    rec = AugmentRecord()

    if rng.random() < prob:
        rec.scale = float(rng.uniform(1.0 - p.rescale_range, 1.0 + p.rescale_range))
    sh, sw = int(round(h * rec.scale)), int(round(w * rec.scale))
    rec.scaled_hw = (sh, sw)
    if p.crop_hw > min(sh, sw):
        raise ParameterError(f"crop {p.crop_hw} larger than rescaled image {sw}x{sh}")
    maps = gts.maps
    if rec.scale != 1.0:
        img = imgproc.resize(img, sh, sw, "bilinear")
        maps = imgproc.resize(maps, sh, sw, gt_mode)

    if rng.random() < prob:
        cx = int(rng.integers(0, sw - p.crop_hw + 1))
        cy = int(rng.integers(0, sh - p.crop_hw + 1))
    else:
        cx, cy = (sw - p.crop_hw) // 2, (sh - p.crop_hw) // 2
    rec.crop_xy = (cx, cy)
    img = imgproc.crop(img, cx, cy, p.crop_hw, p.crop_hw)
    maps = imgproc.crop(maps, cx, cy, p.crop_hw, p.crop_hw)

    flip = bool(rng.random() < prob)
    rot = int(rng.integers(1, 4)) if rng.random() < prob else 0
    rec.transform = GeomTransform(rot, flip)
    img = rec.transform.apply(img)
    maps = rec.transform.apply(maps)

    c = img.shape[0] if photometric_channels is None else int(photometric_channels)
    d = p.brightness_contrast_range
    photo = img[:c]
    if rng.random() < prob:
        rec.brightness = rng.uniform(-d, d, size=c)
        photo = photo + rec.brightness[:, None, None]
    if rng.random() < prob:
        rec.contrast = rng.uniform(1.0 - d, 1.0 + d, size=c)
        mean = photo.mean(axis=(-2, -1), keepdims=True)
        photo = mean + rec.contrast[:, None, None] * (photo - mean)
    img = np.clip(np.concatenate([photo, img[c:]]), 0.0, 1.0)

    xy = map_points(pts.xy, (h, w), rec)
    n = p.crop_hw
    inside = (xy[:, 0] >= 0) & (xy[:, 1] >= 0) & (xy[:, 0] <= n - 1) & (xy[:, 1] <= n - 1)
    xy = rec.transform.apply_points(xy[inside], n, n)
    out_pts = PointAnnotations(xy, pts.class_id[inside], pts.mpp)
    return img, GroundTruthMaps(maps, gts.format), out_pts, rec


def _balance_weights(under, over, base):
    """Weights ``base * (1 + alpha * deficit)`` equalising weighted class totals.

    ``deficit`` is how much a sample's under-represented count exceeds its
    over-represented one. Returns ``None`` when no sample has a surplus of the
    rarer class, in which case exact balance is unreachable by upweighting.
    """
    gain = np.maximum(under - over, 0.0) * base
    lever = float(np.sum(gain * (under - over)))
    if lever <= 0:
        return None
    alpha = float(np.sum(base * (over - under))) / lever
    return base * (1.0 + alpha * np.maximum(under - over, 0.0))


def _weights(a, b, base):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    A, B = float((base * a).sum()), float((base * b).sum())
    if A == 0 or B == 0 or A == B:
        return base.copy()
    if A < B:
        w = _balance_weights(a, b, base)
    else:
        w = _balance_weights(b, a, base)
    if w is None:
        log.warning("no sample favours the rarer class; keeping uniform weights")
        return base.copy()
    return w


def oversample_weights_cells(annotations):
    """Per-sample sampling weights balancing tumor and background cell instances.

    ``annotations`` is a sequence of :class:`PointAnnotations` (or class-id arrays).
    """
    counts = []
    for a in annotations:
        cid = a.class_id if isinstance(a, PointAnnotations) else np.asarray(a)
        counts.append(((cid == TUMOR_CELL).sum(), (cid == BACKGROUND_CELL).sum()))
    if not counts:
        return np.zeros(0)
    t, b = np.array(counts, dtype=np.float64).T
    return _weights(t, b, np.ones(len(t)))


def oversample_weights_tissue(masks):
    """Per-sample weights balancing background and cancer pixels; Unknown is ignored.

    Samples without any labelled pixel get weight 0.
    """
    counts = []
    for m in masks:
        m = np.asarray(m)
        counts.append(((m == TISSUE_CANCER).sum(), (m == TISSUE_BACKGROUND).sum()))
    if not counts:
        return np.zeros(0)
    c, b = np.array(counts, dtype=np.float64).T
    base = ((c + b) > 0).astype(np.float64)
    if base.sum() == 0:
        return base
    return _weights(c, b, base)


def expected_counts(weights, a, b):
    """Expected per-draw counts of two classes under normalised sampling weights."""
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    return float(w @ np.asarray(a, dtype=np.float64)), float(w @ np.asarray(b, dtype=np.float64))
