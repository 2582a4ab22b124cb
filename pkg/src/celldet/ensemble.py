"""Cell-tissue input composition, tissue-label leaking, dihedral TTA and fold averaging."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import imgproc
from .data import TISSUE_BACKGROUND, TISSUE_CANCER, TISSUE_UNKNOWN
from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class GeomTransform:
    """Horizontal flip (optional) followed by ``rotation`` counter-clockwise quarter turns."""

    rotation: int = 0
    flip: bool = False

    def __post_init__(self):
        if self.rotation not in (0, 1, 2, 3):
            raise ParameterError(f"rotation must be 0..3 quarter turns, got {self.rotation}")

    @property
    def degrees(self):
        return 90 * self.rotation

    def apply(self, r):
        a = np.asarray(r)
        if self.rotation % 2 and a.shape[-1] != a.shape[-2]:
            raise ShapeError(f"odd rotation of non-square raster {a.shape[-2:]}")
        if self.flip:
            a = a[..., ::-1]
        return np.rot90(a, self.rotation, axes=(-2, -1)).copy()

    def invert(self, r):
        a = np.asarray(r)
        if self.rotation % 2 and a.shape[-1] != a.shape[-2]:
            raise ShapeError(f"odd rotation of non-square raster {a.shape[-2:]}")
        a = np.rot90(a, -self.rotation, axes=(-2, -1))
        if self.flip:
            a = a[..., ::-1]
        return a.copy()

    def apply_points(self, xy, h, w):
        """Map ``(x, y)`` coordinates of an ``h x w`` raster through the transform."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        x, y = xy[:, 0].copy(), xy[:, 1].copy()
        if self.flip:
            x = (w - 1) - x
        for _ in range(self.rotation):
            # one counter-clockwise quarter turn of an h x w raster
            x, y = y, (w - 1) - x
            h, w = w, h
        return np.stack([x, y], axis=1)

    def output_shape(self, h, w):
        return (w, h) if self.rotation % 2 else (h, w)

    def then(self, other):
        """Transform equivalent to applying ``self`` first and ``other`` second."""
        r1, f1 = self.rotation, self.flip
        r2, f2 = other.rotation, other.flip
        # flip . rot(k) == rot(-k) . flip
        if f2:
            return GeomTransform((r2 - r1) % 4, not f1)
        return GeomTransform((r1 + r2) % 4, f1)


D4 = tuple(GeomTransform(r, f) for f, r in product((False, True), range(4)))
IDENTITY = D4[0]


def _pairwise_mean(arrays):
    # balanced summation; identical inputs give a bit-identical mean when the
    # count is a power of two (the eight dihedral transforms)
    items = list(arrays)
    n = len(items)
    while len(items) > 1:
        nxt = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0] / n


def tta_predict(model, x, transforms=D4):
    """Average of ``invert(model(apply(x, t)), t)`` over the dihedral transforms."""
    outs = [t.invert(model(t.apply(x))) for t in transforms]
    return _pairwise_mean(outs)


def average_predictions(preds):
    """Pixel-wise mean of equally shaped prediction maps."""
    preds = [np.asarray(p, dtype=np.float64) for p in preds]
    if not preds:
        raise ParameterError("no predictions to average")
    shape = preds[0].shape
    if any(p.shape != shape for p in preds):
        raise ParameterError("predictions differ in shape")
    return _pairwise_mean(preds)


def crop_upsample_tissue(tissue_pred, reg, out_h, out_w):
    """Cut the cell field of view out of a tissue map and upsample it bilinearly."""
    t = np.asarray(tissue_pred, dtype=np.float64)
    if t.ndim == 2:
        t = t[None]
    reg.validate(t.shape[-2:])
    x0, y0 = reg.cell_offset_in_tissue
    w, h = reg.cell_extent_in_tissue
    window = imgproc.crop(t, x0, y0, w, h)
    return imgproc.resize(window, out_h, out_w, mode="bilinear")


def compose_ctm_input(cell_img, tissue_pred, reg):
    """Image channels followed by the registered tissue channels."""
    img = np.asarray(cell_img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    tissue = crop_upsample_tissue(tissue_pred, reg, *img.shape[-2:])
    return np.concatenate([img, tissue], axis=0)


def leak_tissue_labels(tissue_pred, tissue_gt):
    """Replace the prediction by one-hot ground truth wherever the label is known.

    ``tissue_pred`` is ``(2, H, W)`` over [background, cancer]; Unknown pixels
    of ``tissue_gt`` keep the prediction.
    """
    pred = np.asarray(tissue_pred, dtype=np.float64)
    gt = np.asarray(tissue_gt)
    if pred.shape[-2:] != gt.shape:
        raise ShapeError(f"tissue prediction {pred.shape[-2:]} vs labels {gt.shape}")
    bad = ~np.isin(gt, (TISSUE_BACKGROUND, TISSUE_CANCER, TISSUE_UNKNOWN))
    if bad.any():
        raise ParameterError(f"unexpected tissue label {gt[bad][0]}")
    known = gt != TISSUE_UNKNOWN
    onehot = np.stack([gt == TISSUE_BACKGROUND, gt == TISSUE_CANCER]).astype(np.float64)
    return np.where(known[None], onehot, pred)


def ensemble_predict(models, x, tta=False, tta_inside=True):
    """Fold-average several models, optionally with TTA.

    ``tta_inside`` averages TTA per model before fold averaging; otherwise the
    fold ensemble is wrapped in a single TTA.
    """
    models = list(models)
    if not models:
        raise ParameterError("no models given")
    if not tta:
        return average_predictions([m(x) for m in models])
    if tta_inside:
        return average_predictions([tta_predict(m, x) for m in models])
    return tta_predict(lambda a: average_predictions([m(a) for m in models]), x)
