"""Shared containers and label conventions.

Rasters are plain numpy arrays: ``(H, W)`` for single-channel maps and
``(C, H, W)`` (channel-first) for multi-channel ones. Coordinates follow
``x = column, y = row`` with the origin at the top-left pixel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DataError, ParameterError, RegistrationError

# cell classes; also the channel index in a 3-channel prediction map
BACKGROUND = 0
BACKGROUND_CELL = 1
TUMOR_CELL = 2
CELL_CLASSES = (BACKGROUND_CELL, TUMOR_CELL)
CHANNEL_NAMES = ("background", "background_cell", "tumor_cell")

# tissue label values
TISSUE_BACKGROUND = 1
TISSUE_CANCER = 2
TISSUE_UNKNOWN = 255
TISSUE_CHANNEL_NAMES = ("background", "cancer")

GT_FORMATS = ("circle", "hard_is", "soft_is")

DEFAULT_MPP = 0.2


@dataclass
class PointAnnotations:
    """Cell centroids with their class ids.

    ``xy`` is an ``(N, 2)`` float array of ``(x, y)`` pixel coordinates.
    """

    xy: np.ndarray
    class_id: np.ndarray
    mpp: float = DEFAULT_MPP

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        self.class_id = np.asarray(self.class_id, dtype=np.int64).reshape(-1)
        if len(self.xy) != len(self.class_id):
            raise DataError(
                f"{len(self.xy)} coordinates but {len(self.class_id)} class ids")
        bad = ~np.isin(self.class_id, CELL_CLASSES)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"annotation {i}: class id {self.class_id[i]} not in {CELL_CLASSES}")
        if not np.all(np.isfinite(self.xy)):
            raise DataError("non-finite annotation coordinates")

    @classmethod
    def empty(cls, mpp=DEFAULT_MPP):
        return cls(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), mpp)

    def __len__(self):
        return len(self.class_id)

    @property
    def x(self):
        return self.xy[:, 0]

    @property
    def y(self):
        return self.xy[:, 1]

    def subset(self, index):
        return PointAnnotations(self.xy[index], self.class_id[index], self.mpp)

    def shifted(self, dx, dy):
        return PointAnnotations(self.xy + np.array([dx, dy], dtype=float), self.class_id, self.mpp)

    def check_inside(self, h, w):
        if len(self) == 0:
            return
        x, y = self.x, self.y
        out = (x < 0) | (y < 0) | (x > w - 1) | (y > h - 1)
        if out.any():
            i = int(np.flatnonzero(out)[0])
            raise BoundsError(f"annotation {i} at ({x[i]}, {y[i]}) outside {w}x{h} patch")

    def pixel_indices(self):
        """Nearest pixel (row, col) for each annotation, rounding half up."""
        rc = np.floor(self.xy[:, ::-1] + 0.5).astype(np.int64)
        return rc[:, 0], rc[:, 1]


@dataclass
class Detection:
    x: float
    y: float
    class_id: int
    confidence: float


def detections_to_points(dets, mpp=DEFAULT_MPP):
    if not dets:
        return PointAnnotations.empty(mpp)
    return PointAnnotations([(d.x, d.y) for d in dets], [d.class_id for d in dets], mpp)


@dataclass
class InstanceGroundTruth:
    """Instance label map plus the link between annotations and instances.

    ``matched[i]`` is the instance label of annotation ``i`` or ``None`` when
    the instance segmenter produced nothing for that cell.
    """

    instances: np.ndarray
    instance_class: dict = field(default_factory=dict)
    matched: list = field(default_factory=list)

    def __post_init__(self):
        self.instances = np.asarray(self.instances)
        if self.instances.ndim != 2:
            raise DataError("instance map must be 2-D")
        if self.instances.size and self.instances.min() < 0:
            raise DataError("instance labels must be non-negative")
        present = set(np.unique(self.instances).tolist()) - {0}
        for i, lab in enumerate(self.matched):
            if lab is not None and lab not in present:
                raise DataError(f"annotation {i} matched to missing instance {lab}")

    @classmethod
    def from_label_map(cls, instances, pts):
        """Link each annotation to the instance under its centroid pixel.

        An instance claimed by an earlier annotation is not reassigned; the
        later annotation is left unmatched.
        """
        instances = np.asarray(instances)
        h, w = instances.shape
        rows, cols = pts.pixel_indices()
        matched, instance_class = [], {}
        for i, (r, c) in enumerate(zip(rows, cols)):
            lab = int(instances[r, c]) if 0 <= r < h and 0 <= c < w else 0
            if lab == 0 or lab in instance_class:
                matched.append(None)
            else:
                matched.append(lab)
                instance_class[lab] = int(pts.class_id[i])
        return cls(instances, instance_class, matched)

    @property
    def unmatched(self):
        return np.array([m is None for m in self.matched], dtype=bool)


@dataclass
class GroundTruthMaps:
    """Channel-first ``(3, H, W)`` map over [background, background cell, tumor cell]."""

    maps: np.ndarray
    format: str

    def __post_init__(self):
        if self.format not in GT_FORMATS:
            raise ParameterError(f"unknown ground-truth format {self.format!r}")
        if self.maps.ndim != 3 or self.maps.shape[0] != 3:
            raise DataError(f"expected (3, H, W) maps, got {self.maps.shape}")

    @property
    def one_hot(self):
        return self.format != "soft_is"


@dataclass(frozen=True)
class PatchRegistration:
    """Placement of a cell patch inside its (lower-magnification) tissue patch.

    Offsets and extents are in tissue pixels.
    """

    tissue_mpp: float
    cell_mpp: float
    cell_offset_in_tissue: tuple
    cell_extent_in_tissue: tuple

    @property
    def scale(self):
        return self.tissue_mpp / self.cell_mpp

    def validate(self, tissue_shape=None):
        if self.cell_mpp <= 0 or self.tissue_mpp <= 0:
            raise RegistrationError("mpp values must be positive")
        if self.scale <= 1:
            raise RegistrationError(f"tissue/cell mpp ratio {self.scale} must exceed 1")
        x0, y0 = self.cell_offset_in_tissue
        w, h = self.cell_extent_in_tissue
        if w < 1 or h < 1:
            raise RegistrationError("cell extent must be positive")
        if tissue_shape is not None:
            th, tw = tissue_shape
            if x0 < 0 or y0 < 0 or x0 + w > tw or y0 + h > th:
                raise RegistrationError(
                    f"cell window x={x0} y={y0} w={w} h={h} outside {tw}x{th} tissue patch")

    @classmethod
    def centered(cls, cell_shape, tissue_shape, cell_mpp=0.2, tissue_mpp=0.8):
        """Cell field of view centred in the tissue patch."""
        scale = tissue_mpp / cell_mpp
        ch, cw = cell_shape
        th, tw = tissue_shape
        w, h = int(round(cw / scale)), int(round(ch / scale))
        reg = cls(tissue_mpp, cell_mpp, ((tw - w) // 2, (th - h) // 2), (w, h))
        reg.validate(tissue_shape)
        return reg

    def to_dict(self):
        return {
            "tissue_mpp": self.tissue_mpp,
            "cell_mpp": self.cell_mpp,
            "cell_offset_in_tissue": list(self.cell_offset_in_tissue),
            "cell_extent_in_tissue": list(self.cell_extent_in_tissue),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["tissue_mpp"]), float(d["cell_mpp"]),
                   tuple(int(v) for v in d["cell_offset_in_tissue"]),
                   tuple(int(v) for v in d["cell_extent_in_tissue"]))
