"""File formats: annotation/detection CSV, metadata JSON, PNG rasters, tables and models.

Rasters on disk:

* images: 8-bit RGB PNG, value ``round(v * 255)`` of ``[0, 1]`` floats;
* probability maps: one 16-bit grayscale PNG per channel, value
  ``round(p * 65535)``, plus a JSON channel index listing the files in order;
* instance masks: 16-bit grayscale PNG of integer labels;
* tissue label maps: 8-bit grayscale PNG (1 background, 2 cancer, 255 unknown).

JSON is written with sorted keys and a fixed layout so identical content
gives identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .data import (CELL_CLASSES, CHANNEL_NAMES, Detection, InstanceGroundTruth,
                   PatchRegistration, PointAnnotations)
from .errors import DataError, ParseError, ShapeError

ANNOTATION_HEADER = ("x", "y", "class_id")
DETECTION_HEADER = ("x", "y", "class_id", "confidence")


def _num(v):
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2 ** 53 else repr(v)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- CSV -----------------------------------------------------------------------

def _read_rows(path, header):
    """Rows of floats from a CSV with an optional header line."""
    path = str(path)
    rows = []
    with open(path, newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            cells = [c.strip() for c in row]
            if line_no == 1 and tuple(c.lower() for c in cells) == header:
                continue
            if len(cells) != len(header):
                raise ParseError(f"expected {len(header)} fields {header}, got {len(cells)}",
                                 path, line_no)
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                raise ParseError(f"non-numeric field in {cells}", path, line_no) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", path, line_no)
            cid = vals[2]
            if not cid.is_integer() or int(cid) not in CELL_CLASSES:
                raise ParseError(f"class_id {cells[2]} not in {CELL_CLASSES}", path, line_no)
            rows.append((line_no, vals))
    return rows


def read_annotations_csv(path, mpp=0.2):
    rows = _read_rows(path, ANNOTATION_HEADER)
    if not rows:
        return PointAnnotations.empty(mpp)
    v = np.array([r for _, r in rows])
    return PointAnnotations(v[:, :2], v[:, 2].astype(np.int64), mpp)


def write_annotations_csv(path, pts):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ANNOTATION_HEADER)
        for (x, y), c in zip(pts.xy, pts.class_id):
            w.writerow((_num(x), _num(y), int(c)))


def read_detections_csv(path):
    dets = []
    for _, (x, y, c, conf) in _read_rows(path, DETECTION_HEADER):
        dets.append(Detection(x, y, int(c), conf))
    return dets


def write_detections_csv(path, dets):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DETECTION_HEADER)
        for d in dets:
            w.writerow((_num(d.x), _num(d.y), int(d.class_id), _num(d.confidence)))


# -- JSON ----------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w") as f:
        f.write(dumps_json(obj))


def read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, str(path), e.lineno) from None


def write_metadata(path, registration, organ_tag="", scene_id=0, extra=None):
    """Minimal patch metadata: resolutions, registration and organ tag."""
    meta = {"cell_mpp": registration.cell_mpp, "tissue_mpp": registration.tissue_mpp,
            "registration": registration.to_dict(), "organ_tag": organ_tag,
            "scene_id": int(scene_id)}
    if extra:
        meta.update(extra)
    write_json(path, meta)


def read_metadata(path):
    meta = read_json(path)
    try:
        meta["registration"] = PatchRegistration.from_dict(meta["registration"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad registration block: {e}", str(path)) from None
    return meta


# -- tables --------------------------------------------------------------------

def table_columns(rows):
    """Scalar-valued keys in first-seen order (nested lists/dicts are left to JSON)."""
    cols = []
    for r in rows:
        for k, v in r.items():
            if k not in cols and not isinstance(v, (list, tuple, dict)):
                cols.append(k)
    return cols


def write_table_csv(path, rows, columns=None):
    columns = columns or table_columns(rows)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c, "")) for c in columns])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_table_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# -- PNG rasters ---------------------------------------------------------------

def write_rgb_png(path, img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) image, got {img.shape}")
    q = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(np.ascontiguousarray(q.transpose(1, 2, 0)), "RGB").save(path)


def read_rgb_png(path):
    with Image.open(path) as im:
        a = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return a.transpose(2, 0, 1).copy()


def _write_u16(path, a):
    Image.fromarray(np.ascontiguousarray(a.astype(np.uint16))).save(path)


def _read_u16(path):
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I", "L"):
            raise ParseError(f"expected a 16-bit grayscale PNG, got mode {im.mode}", str(path))
        return np.asarray(im).astype(np.int64)


def write_map_pngs(directory, stem, maps, channel_names=CHANNEL_NAMES):
    """Write ``(C, H, W)`` probabilities as planar 16-bit PNGs plus ``<stem>.json``."""
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3 or maps.shape[0] != len(channel_names):
        raise ShapeError(f"{maps.shape[0] if maps.ndim == 3 else maps.shape} channels vs "
                         f"{len(channel_names)} names")
    if np.any(maps < 0) or np.any(maps > 1) or not np.all(np.isfinite(maps)):
        raise DataError("probability maps must lie in [0, 1]")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for name, ch in zip(channel_names, maps):
        fname = f"{stem}_{name}.png"
        _write_u16(d / fname, np.round(ch * 65535))
        files.append(fname)
    index = {"channels": list(channel_names), "files": files, "scale": 65535,
             "shape": list(maps.shape[1:])}
    write_json(d / f"{stem}.json", index)
    return d / f"{stem}.json"


def read_map_pngs(index_path):
    index_path = Path(index_path)
    index = read_json(index_path)
    try:
        files, scale = index["files"], float(index["scale"])
    except KeyError as e:
        raise ParseError(f"channel index lacks {e}", str(index_path)) from None
    chans = [_read_u16(index_path.parent / f) / scale for f in files]
    shapes = {c.shape for c in chans}
    if len(shapes) != 1:
        raise ShapeError(f"channel PNGs differ in shape: {sorted(shapes)}")
    return np.stack(chans), list(index.get("channels", []))


def write_label_png(path, labels):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 65535):
        raise DataError("instance labels must lie in [0, 65535]")
    _write_u16(path, labels)


def read_label_png(path):
    return _read_u16(path)


def write_mask_png(path, mask):
    mask = np.asarray(mask)
    if mask.size and (mask.min() < 0 or mask.max() > 255):
        raise DataError("mask values must lie in [0, 255]")
    Image.fromarray(np.ascontiguousarray(mask.astype(np.uint8)), "L").save(path)


def read_mask_png(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L")).astype(np.int64)


# -- scenes and models -----------------------------------------------------------

SCENE_FILES = {"cell": "cell.png", "tissue": "tissue.png", "annotations": "annotations.csv",
               "instances": "instances.png", "tissue_gt": "tissue_gt.png", "meta": "meta.json"}


def write_scene(directory, scene):
    """Write a :class:`SynthScene` as a patch directory."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_rgb_png(d / SCENE_FILES["cell"], scene.cell_img)
    write_rgb_png(d / SCENE_FILES["tissue"], scene.tissue_img)
    write_annotations_csv(d / SCENE_FILES["annotations"], scene.annotations)
    write_label_png(d / SCENE_FILES["instances"], scene.instances.instances)
    write_mask_png(d / SCENE_FILES["tissue_gt"], scene.tissue_gt)
    write_metadata(d / SCENE_FILES["meta"], scene.registration, scene.organ_tag, scene.scene_id)
    return d


def read_scene(directory):
    """Read a patch directory back into a :class:`SynthScene` (images quantized to 8 bit)."""
    from .trainbench.synth import SynthScene

    d = Path(directory)
    missing = [f for f in SCENE_FILES.values() if not (d / f).exists()]
    if missing:
        raise ParseError(f"scene directory lacks {missing}", str(d))
    meta = read_metadata(d / SCENE_FILES["meta"])
    reg = meta["registration"]
    pts = read_annotations_csv(d / SCENE_FILES["annotations"], reg.cell_mpp)
    cell = read_rgb_png(d / SCENE_FILES["cell"])
    labels = read_label_png(d / SCENE_FILES["instances"])
    if labels.shape != cell.shape[1:]:
        raise ShapeError(f"instances {labels.shape} vs cell image {cell.shape[1:]}")
    inst = InstanceGroundTruth.from_label_map(labels, pts)
    return SynthScene(cell, read_rgb_png(d / SCENE_FILES["tissue"]), pts, inst,
                      read_mask_png(d / SCENE_FILES["tissue_gt"]), reg,
                      meta.get("organ_tag", ""), None, int(meta.get("scene_id", 0)))


def model_to_dict(model):
    return {"feature_config": model.feature_config.to_dict(), "n_classes": model.n_classes,
            "weights": model.weights, "bias": model.bias, "feat_mean": model.feat_mean,
            "feat_std": model.feat_std, "meta": model.meta}


def model_from_dict(d):
    from .trainbench.model import FeatureConfig, PixelModel

    fc = dict(d["feature_config"])
    fc["blur_scales"] = tuple(fc["blur_scales"])
    m = PixelModel(FeatureConfig(**fc), int(d["n_classes"]),
                   np.array(d["weights"], dtype=np.float64), np.array(d["bias"], dtype=np.float64),
                   np.array(d["feat_mean"], dtype=np.float64),
                   np.array(d["feat_std"], dtype=np.float64), dict(d.get("meta", {})))
    expected = (m.feature_config.n_features, m.n_classes)
    if m.weights.shape != expected:
        raise ShapeError(f"weights {m.weights.shape} vs expected {expected}")
    return m


def write_models(path, models, meta=None):
    """Save one or more (fold) models as JSON; floats round-trip exactly."""
    write_json(path, {"models": [model_to_dict(m) for m in models], "meta": meta or {}})


def read_models(path):
    d = read_json(path)
    try:
        return [model_from_dict(m) for m in d["models"]], d.get("meta", {})
    except (KeyError, TypeError) as e:
        raise ParseError(f"malformed model file: {e}", str(path)) from None
