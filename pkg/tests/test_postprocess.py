import numpy as np
import pytest

from celldet.data import BACKGROUND_CELL, TUMOR_CELL, PointAnnotations
from celldet.errors import ParameterError
from celldet.groundtruth import circle_gt, soft_is_gt
from celldet.postprocess import (PostprocParams, detect_cells, detect_cells_hard, detect_cells_soft,
                                 foreground_map, mode_for_format, split_instances)


def test_soft_recovers_planted_cells():
    pts = PointAnnotations([(12.3, 10.8), (40, 30), (20, 44)], [TUMOR_CELL, BACKGROUND_CELL, TUMOR_CELL])
    dets = detect_cells_soft(soft_is_gt(pts, None, 56, 56, 3.0).maps)
    assert len(dets) == 3
    for (x, y), c in zip(pts.xy, pts.class_id):
        d = min(dets, key=lambda d: np.hypot(d.x - x, d.y - y))
        assert np.hypot(d.x - x, d.y - y) <= 2 and d.class_id == c
        assert 0 <= d.confidence <= 1


def test_soft_on_circle_maps():
    pts = PointAnnotations([(10, 10), (30, 30)], [TUMOR_CELL, BACKGROUND_CELL])
    dets = detect_cells(circle_gt(pts, 40, 40, 7).maps, "soft")
    assert sorted((d.x, d.y, d.class_id) for d in dets) == [(10, 10, TUMOR_CELL), (30, 30, BACKGROUND_CELL)]


def test_empty_and_constant_maps():
    bg = np.zeros((3, 20, 20))
    bg[0] = 1
    assert detect_cells_soft(bg) == []
    assert detect_cells_hard(bg) == []
    assert split_instances(np.zeros((5, 5))) is None


def test_hard_splits_touching_discs_and_votes_class():
    yy, xx = np.mgrid[0:64, 0:64]
    a = np.hypot(xx - 24, yy - 32) <= 9
    b = np.hypot(xx - 38, yy - 32) <= 9
    pred = np.zeros((3, 64, 64))
    pred[0] = ~(a | b)
    pred[TUMOR_CELL] = a
    pred[BACKGROUND_CELL] = b & ~a
    dets = sorted(detect_cells_hard(pred), key=lambda d: d.x)
    assert len(dets) == 2
    assert dets[0].class_id == TUMOR_CELL and dets[1].class_id == BACKGROUND_CELL
    assert abs(dets[0].x - 24) <= 2 and abs(dets[1].x - 38) <= 2


def test_params_and_dispatch():
    with pytest.raises(ParameterError):
        PostprocParams(min_distance_px=0)
    with pytest.raises(ParameterError):
        detect_cells(np.zeros((3, 4, 4)), "medium")
    with pytest.raises(ParameterError):
        foreground_map(np.zeros((2, 4, 4)))
    assert mode_for_format("hard_is") == "hard" and mode_for_format("soft_is") == "soft"
    assert mode_for_format("circle") == "soft"
