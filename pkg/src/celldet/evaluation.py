"""Detection matching, F1 scores and per-organ report tables."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .data import (CELL_CLASSES, TISSUE_CANCER, TISSUE_UNKNOWN, PointAnnotations,
                   detections_to_points)
from .errors import DegenerateInputError, ParameterError


@dataclass
class EvalConfig:
    match_radius_px: float = 15.0
    classes: tuple = CELL_CLASSES

    def __post_init__(self):
        if self.match_radius_px < 1:
            raise ParameterError("match radius must be >= 1 pixel")


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other):
        return ClassCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self):
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self):
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self):
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 0.0


@dataclass
class MatchResult:
    """Per-class counts and matched ``(pred_index, gt_index, distance)`` triples.

    Indices refer to positions in the original (unsplit) prediction and
    ground-truth lists.
    """

    counts: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)

    def __add__(self, other):
        keys = list(OrderedDict.fromkeys(list(self.counts) + list(other.counts)))
        counts = {k: self.counts.get(k, ClassCounts()) + other.counts.get(k, ClassCounts())
                  for k in keys}
        return MatchResult(counts, {})


def greedy_match(pred_xy, gt_xy, radius):
    """Nearest-first one-to-one matching within ``radius``.

    Candidate pairs are sorted by (distance, pred index, gt index) and
    accepted while both ends are free.
    """
    pred_xy = np.asarray(pred_xy, dtype=np.float64).reshape(-1, 2)
    gt_xy = np.asarray(gt_xy, dtype=np.float64).reshape(-1, 2)
    if len(pred_xy) == 0 or len(gt_xy) == 0:
        return []
    d = np.sqrt(((pred_xy[:, None, :] - gt_xy[None, :, :]) ** 2).sum(-1))
    pi, gi = np.nonzero(d <= radius)
    dist = d[pi, gi]
    order = np.lexsort((gi, pi, dist))
    used_p, used_g, pairs = set(), set(), []
    for k in order:
        a, b = int(pi[k]), int(gi[k])
        if a in used_p or b in used_g:
            continue
        used_p.add(a)
        used_g.add(b)
        pairs.append((a, b, float(dist[k])))
    return pairs


def match_detections(preds, gts, cfg=None):
    """Match predictions to annotations independently per class.

    ``preds`` may be a list of :class:`Detection` or :class:`PointAnnotations`.
    """
    cfg = cfg or EvalConfig()
    if not isinstance(preds, PointAnnotations):
        preds = detections_to_points(list(preds), gts.mpp)
    result = MatchResult()
    for c in cfg.classes:
        p_idx = np.flatnonzero(preds.class_id == c)
        g_idx = np.flatnonzero(gts.class_id == c)
        local = greedy_match(preds.xy[p_idx], gts.xy[g_idx], cfg.match_radius_px)
        tp = len(local)
        result.counts[c] = ClassCounts(tp, len(p_idx) - tp, len(g_idx) - tp)
        result.pairs[c] = [(int(p_idx[a]), int(g_idx[b]), d) for a, b, d in local]
    return result


@dataclass
class F1Scores:
    per_class: dict
    precision: dict
    recall: dict

    @property
    def mean_f1(self):
        return float(np.mean(list(self.per_class.values()))) if self.per_class else 0.0

    @property
    def mean_precision(self):
        return float(np.mean(list(self.precision.values()))) if self.precision else 0.0

    @property
    def mean_recall(self):
        return float(np.mean(list(self.recall.values()))) if self.recall else 0.0


def f1_scores(m):
    """Per-class ``2TP / (2TP + FP + FN)`` (0 for an empty denominator) and their mean."""
    return F1Scores(
        {c: k.f1 for c, k in m.counts.items()},
        {c: k.precision for c, k in m.counts.items()},
        {c: k.recall for c, k in m.counts.items()},
    )


def pooled(results):
    """Sum counts over samples (micro aggregation)."""
    total = MatchResult({c: ClassCounts() for c in CELL_CLASSES}, {})
    for r in results:
        total = total + r
    return total


def tissue_f1(pred, gt):
    """Cancer-class F1 over pixels whose label is not Unknown.

    Returns 1.0 when neither prediction nor ground truth contains cancer.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ParameterError(f"shape mismatch {pred.shape} vs {gt.shape}")
    known = gt != TISSUE_UNKNOWN
    if not known.any():
        raise DegenerateInputError("every pixel is Unknown; tissue F1 undefined")
    p = (pred == TISSUE_CANCER) & known
    g = (gt == TISSUE_CANCER) & known
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    d = 2 * tp + fp + fn
    return 2 * tp / d if d else 1.0


def group_report(scores, organ_tags, match_results=None):
    """Per-organ table of sample count and mean per-sample score, plus an ``all`` row.

    Rows are dicts with ``group``, ``n`` and ``mean_f1`` (macro). When
    ``match_results`` are given each row also carries ``pooled_f1``, the mean
    F1 of counts summed over that group's samples (micro).
    """
    scores = np.asarray(scores, dtype=np.float64)
    organ_tags = list(organ_tags)
    if len(organ_tags) != len(scores):
        raise ParameterError("one organ tag per sample required")
    groups = list(OrderedDict.fromkeys(organ_tags))
    tags = np.array(organ_tags, dtype=object)

    def row(name, sel):
        r = {"group": name, "n": int(sel.sum()),
             "mean_f1": float(scores[sel].mean()) if sel.any() else 0.0}
        if match_results is not None:
            r["pooled_f1"] = f1_scores(pooled(m for m, s in zip(match_results, sel) if s)).mean_f1
        return r

    rows = [row("all", np.ones(len(scores), dtype=bool))]
    rows += [row(g, tags == g) for g in groups]
    return rows
