"""Synthetic cell/tissue patch pairs with fully known ground truth.

A scene is a small RGB cell patch at high magnification plus an RGB tissue
patch covering ``tissue_scale`` times the field of view. Nuclei are filled
ellipses whose colour and size depend on the cell class; tissue regions are
thresholded smooth noise. Tumor cells are placed preferentially inside cancer
regions with strength ``rho``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import imgproc
from ..data import (BACKGROUND_CELL, TISSUE_BACKGROUND, TISSUE_CANCER, TISSUE_UNKNOWN,
                    TUMOR_CELL, InstanceGroundTruth, PatchRegistration, PointAnnotations)
from ..errors import ParameterError

ORGANS = ("kidney", "endometrium", "bladder", "prostate", "stomach", "head-neck")

# RGB in [0, 1]
_STROMA = np.array([0.92, 0.74, 0.84])
_TUMOR_NUCLEUS = np.array([0.30, 0.16, 0.48])
_BG_NUCLEUS = np.array([0.52, 0.34, 0.62])
_TISSUE_TINT = {TISSUE_BACKGROUND: np.array([0.90, 0.72, 0.82]),
                TISSUE_CANCER: np.array([0.66, 0.50, 0.74])}


@dataclass
class SceneParams:
    size: int = 128
    tissue_size: int = 128
    cell_mpp: float = 0.2
    tissue_mpp: float = 0.8
    n_cells: int = 14
    min_separation_px: float = 18.0
    tumor_radius_px: tuple = (7.0, 9.0)
    background_radius_px: tuple = (5.0, 7.0)
    rho: float = 0.0
    cue_strength: float = 1.0
    faint_fraction: float = 0.5
    faint_strength: tuple = (0.08, 0.3)
    n_distractors: int = 6
    distractor_strength: tuple = (0.1, 0.3)
    color_noise: float = 0.06
    cancer_fraction: tuple = (0.3, 0.7)
    tissue_smoothness_px: float = 5.0
    unknown_fraction: float = 0.05
    nuclick_miss_rate: float = 0.1
    organ: str = None

    def __post_init__(self):
        if self.size < 8 or self.tissue_size < 8:
            raise ParameterError("scene sizes must be >= 8 px")
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError("rho must be in [0, 1]")
        if not 0.0 <= self.cue_strength <= 1.0:
            raise ParameterError("cue_strength must be in [0, 1]")
        if self.n_cells < 0:
            raise ParameterError("n_cells must be >= 0")
        if self.tissue_mpp <= self.cell_mpp:
            raise ParameterError("tissue patch must have the coarser resolution")

    def to_dict(self):
        return asdict(self)


@dataclass
class SynthScene:
    cell_img: np.ndarray
    tissue_img: np.ndarray
    annotations: PointAnnotations
    instances: InstanceGroundTruth
    tissue_gt: np.ndarray
    registration: PatchRegistration
    organ_tag: str
    cell_tissue: np.ndarray = field(default=None, repr=False)
    scene_id: int = 0

    @property
    def shape(self):
        return self.cell_img.shape[-2:]


def _smooth_noise(rng, shape, sigma):
    f = imgproc.gaussian_blur(rng.standard_normal(shape), sigma)
    return (f - f.mean()) / (f.std() + 1e-12)


def _tissue_labels(rng, p):
    n = p.tissue_size
    field_ = _smooth_noise(rng, (n, n), p.tissue_smoothness_px)
    frac = rng.uniform(*p.cancer_fraction)
    cut = np.quantile(field_, 1.0 - frac)
    truth = np.where(field_ > cut, TISSUE_CANCER, TISSUE_BACKGROUND).astype(np.uint8)
    gt = truth.copy()
    if p.unknown_fraction > 0:
        unk = _smooth_noise(rng, (n, n), p.tissue_smoothness_px / 2)
        gt[unk > np.quantile(unk, 1.0 - p.unknown_fraction)] = TISSUE_UNKNOWN
    return truth, gt


def _place_cells(rng, p):
    margin = max(p.tumor_radius_px[1], p.background_radius_px[1]) * 0.5
    lo, hi = margin, p.size - 1 - margin
    pts = []
    attempts = 0
    while len(pts) < p.n_cells:
        attempts += 1
        if attempts > 5000 * max(p.n_cells, 1):
            raise ParameterError(
                f"could not place {p.n_cells} cells {p.min_separation_px} px apart in {p.size} px")
        c = np.round(rng.uniform(lo, hi, size=2))
        if all(np.hypot(*(c - q)) >= p.min_separation_px for q in pts):
            pts.append(c)
    return np.array(pts, dtype=np.float64).reshape(-1, 2)


def _ellipse(shape, cx, cy, a, b, theta):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    dx, dy = xx - cx, yy - cy
    c, s = np.cos(theta), np.sin(theta)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    return u * u + v * v <= 1.0


def synth_scene(rng, params=None, scene_id=0):
    """Generate one scene from an explicit ``numpy.random.Generator``."""
    p = params or SceneParams()
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = p.size
    reg = PatchRegistration.centered((n, n), (p.tissue_size, p.tissue_size),
                                     p.cell_mpp, p.tissue_mpp)
    truth, tissue_gt = _tissue_labels(rng, p)
    x0, y0 = reg.cell_offset_in_tissue
    ew, eh = reg.cell_extent_in_tissue
    cell_tissue = imgproc.resize(imgproc.crop(truth, x0, y0, ew, eh), n, n, "nearest")

    xy = _place_cells(rng, p)
    cls = np.empty(len(xy), dtype=np.int64)
    for i, (x, y) in enumerate(xy):
        in_cancer = cell_tissue[int(y), int(x)] == TISSUE_CANCER
        p_tumor = 0.5 + 0.5 * p.rho if in_cancer else 0.5 - 0.5 * p.rho
        cls[i] = TUMOR_CELL if rng.random() < p_tumor else BACKGROUND_CELL

    # background stroma with low-frequency texture
    img = _STROMA[:, None, None] + 0.03 * _smooth_noise(rng, (3, n, n), 6.0)
    labels = np.zeros((n, n), dtype=np.int32)
    mid = 0.5 * (_TUMOR_NUCLEUS + _BG_NUCLEUS)
    for i, ((x, y), c) in enumerate(zip(xy, cls)):
        if c == TUMOR_CELL:
            r = rng.uniform(*p.tumor_radius_px)
            colour = mid + p.cue_strength * (_TUMOR_NUCLEUS - mid)
        else:
            r = rng.uniform(*p.background_radius_px)
            colour = mid + p.cue_strength * (_BG_NUCLEUS - mid)
        # blend radii toward the common mean when cues are degraded
        r_mid = 0.25 * (sum(p.tumor_radius_px) + sum(p.background_radius_px))
        r = r_mid + p.cue_strength * (r - r_mid)
        ecc = rng.uniform(0.75, 1.0)
        shape = _ellipse((n, n), x, y, r, r * ecc, rng.uniform(0, np.pi))
        shape[int(y), int(x)] = True
        shape &= labels == 0
        labels[shape] = i + 1
        strength = rng.uniform(*p.faint_strength) if rng.random() < p.faint_fraction else 1.0
        target = colour + p.color_noise * rng.standard_normal(3)
        img[:, shape] += strength * (target[:, None] - img[:, shape])

    for _ in range(p.n_distractors):
        cx, cy = rng.uniform(0, n - 1, size=2)
        r = rng.uniform(3.0, 6.0)
        shape = _ellipse((n, n), cx, cy, r, r * rng.uniform(0.5, 1.0), rng.uniform(0, np.pi))
        shape &= labels == 0
        img[:, shape] += rng.uniform(*p.distractor_strength) * (mid[:, None] - img[:, shape])

    img = imgproc.gaussian_blur(img, 0.8) + p.color_noise * rng.standard_normal((3, n, n))
    img = np.clip(img, 0.0, 1.0)

    # instance segmenter misses: drop the instance, keep the annotation
    miss = rng.random(len(xy)) < p.nuclick_miss_rate
    for i in np.flatnonzero(miss):
        labels[labels == i + 1] = 0
    pts = PointAnnotations(xy, cls, p.cell_mpp)
    inst = InstanceGroundTruth.from_label_map(labels, pts)

    tn = p.tissue_size
    tint = np.stack([_TISSUE_TINT[int(v)] for v in (TISSUE_BACKGROUND, TISSUE_CANCER)])
    tissue_img = tint[(truth == TISSUE_CANCER).astype(int)].transpose(2, 0, 1)
    tissue_img = tissue_img + 0.04 * _smooth_noise(rng, (3, tn, tn), 2.0)
    tissue_img = tissue_img + p.color_noise * rng.standard_normal((3, tn, tn))
    tissue_img = np.clip(imgproc.gaussian_blur(tissue_img, 0.8), 0.0, 1.0)

    organ = p.organ or ORGANS[int(rng.integers(len(ORGANS)))]
    return SynthScene(img, tissue_img, pts, inst, tissue_gt, reg, organ, cell_tissue, scene_id)


def make_scenes(seed, count, params=None, organs=None):
    """``count`` scenes from one seed; organ tags cycle through ``organs`` when given."""
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(count):
        p = params or SceneParams()
        if organs:
            p = SceneParams(**{**p.to_dict(), "organ": organs[i % len(organs)]})
        scenes.append(synth_scene(rng, p, scene_id=i))
    return scenes
