"""Turn predicted class maps into cell detections.

``pred`` is always a ``(3, H, W)`` map over [background, background cell,
tumor cell].
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import imgproc
from .data import BACKGROUND_CELL, TUMOR_CELL, Detection
from .errors import DegenerateInputError, ParameterError


@dataclass
class PostprocParams:
    blur_sigma_px: float = 2.0
    min_distance_px: int = 7
    peak_threshold: float = 0.2
    min_area_px: int = 10

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ParameterError(f"{name} must be positive, got {value}")


def _check_pred(pred):
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 3 or pred.shape[0] != 3:
        raise ParameterError(f"expected a (3, H, W) prediction, got {pred.shape}")
    return pred


def foreground_map(pred):
    """Sum of the background-cell and tumor-cell channels."""
    pred = _check_pred(pred)
    return pred[BACKGROUND_CELL] + pred[TUMOR_CELL]


def detect_cells_soft(pred, params=None):
    """Peak finding on the blurred foreground, for circle and soft maps.

    A peak survives if either cell channel beats the background channel at
    that pixel (unblurred). Its class is the larger cell channel (background
    cell on ties) and its confidence the blurred foreground value.
    """
    p = params or PostprocParams()
    pred = _check_pred(pred)
    fg = imgproc.gaussian_blur(foreground_map(pred), p.blur_sigma_px)
    peaks = imgproc.peak_local_max(fg, p.min_distance_px, p.peak_threshold)
    dets = []
    for x, y in peaks:
        bg, bc, tc = pred[:, y, x]
        if max(bc, tc) <= bg:
            continue
        cls = TUMOR_CELL if tc > bc else BACKGROUND_CELL
        dets.append(Detection(int(x), int(y), cls, float(np.clip(fg[y, x], 0.0, 1.0))))
    return dets


def split_instances(fg, params=None):
    """Binary foreground -> cleaned mask -> EDT markers -> watershed instances.

    Returns the instance label map, or ``None`` when Otsu is undefined.
    """
    p = params or PostprocParams()
    try:
        t = imgproc.otsu_threshold(fg)
    except DegenerateInputError:
        return None
    mask = imgproc.remove_small_objects_and_fill_holes(fg > t, p.min_area_px)
    if not mask.any():
        return np.zeros(fg.shape, dtype=np.int32)
    edt = imgproc.euclidean_distance_transform(mask)
    # every foreground pixel has distance >= 1, so 0.5 excludes background plateaus
    peaks = imgproc.peak_local_max(edt, p.min_distance_px, 0.5)
    markers = np.zeros(fg.shape, dtype=np.int32)
    markers[peaks[:, 1], peaks[:, 0]] = np.arange(1, len(peaks) + 1)
    return imgproc.watershed(-edt, markers, mask)


def detect_cells_hard(pred, params=None):
    """Marker-controlled watershed pipeline for hard instance maps.

    Class is the majority of per-pixel argmax over the two cell channels
    (background cell on ties); confidence is the mean foreground over the
    instance.
    """
    pred = _check_pred(pred)
    fg = foreground_map(pred)
    labels = split_instances(fg, params)
    if labels is None or not labels.any():
        return []
    ids, xy = imgproc.center_of_mass(labels)
    flat = labels.ravel()
    n = np.bincount(flat, minlength=ids.max() + 1)
    is_tc = (pred[TUMOR_CELL] > pred[BACKGROUND_CELL]).ravel().astype(np.float64)
    n_tc = np.bincount(flat, weights=is_tc, minlength=ids.max() + 1)
    fg_sum = np.bincount(flat, weights=fg.ravel(), minlength=ids.max() + 1)
    dets = []
    for lab, (x, y) in zip(ids, xy):
        cls = TUMOR_CELL if 2 * n_tc[lab] > n[lab] else BACKGROUND_CELL
        conf = float(np.clip(fg_sum[lab] / n[lab], 0.0, 1.0))
        dets.append(Detection(int(x), int(y), cls, conf))
    return dets


def detect_cells(pred, mode="soft", params=None):
    if mode == "soft":
        return detect_cells_soft(pred, params)
    if mode == "hard":
        return detect_cells_hard(pred, params)
    raise ParameterError(f"unknown postprocessing mode {mode!r}")


def mode_for_format(fmt):
    """Postprocessing mode matching a ground-truth format."""
    return "hard" if fmt == "hard_is" else "soft"
