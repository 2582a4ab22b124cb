import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from celldet.data import BACKGROUND_CELL, TUMOR_CELL, Detection, PointAnnotations
from celldet.errors import DegenerateInputError
from celldet.evaluation import (ClassCounts, EvalConfig, f1_scores, greedy_match, group_report,
                                match_detections, pooled, tissue_f1)

pts_st = st.lists(st.tuples(st.floats(0, 60), st.floats(0, 60)), max_size=7)


@settings(max_examples=100, deadline=None)
@given(pts_st, pts_st)
def test_greedy_is_valid_and_maximal_when_unambiguous(pred, gt):
    pred, gt = np.array(pred).reshape(-1, 2), np.array(gt).reshape(-1, 2)
    pairs = greedy_match(pred, gt, 15.0)
    assert len({a for a, _, _ in pairs}) == len(pairs) == len({b for _, b, _ in pairs})
    assert all(d <= 15.0 for *_, d in pairs)
    best = oracles.max_matching(pred, gt, 15.0)
    assert len(pairs) <= best
    if oracles.candidate_components_are_stars(pred, gt, 15.0):
        assert len(pairs) == best


def test_nearest_first():
    pairs = greedy_match([(0, 0), (10, 0)], [(9, 0)], 15)
    assert pairs == [(1, 0, 1.0)]


def test_f1_formula_and_edge_cases():
    assert ClassCounts(8, 2, 4).f1 == pytest.approx(16 / 22)
    assert ClassCounts().f1 == 0.0
    assert ClassCounts(3, 0, 0).precision == 1.0


def test_per_class_matching_and_pooling():
    gt = PointAnnotations([(10, 10), (50, 50)], [TUMOR_CELL, BACKGROUND_CELL])
    dets = [Detection(11, 10, TUMOR_CELL, 0.9), Detection(50, 52, TUMOR_CELL, 0.8)]
    m = match_detections(dets, gt, EvalConfig())
    assert m.counts[TUMOR_CELL] == ClassCounts(1, 1, 0)
    assert m.counts[BACKGROUND_CELL] == ClassCounts(0, 0, 1)
    s = f1_scores(m)
    assert s.per_class[TUMOR_CELL] == pytest.approx(2 / 3) and s.mean_f1 == pytest.approx(1 / 3)
    total = pooled([m, m])
    assert total.counts[TUMOR_CELL] == ClassCounts(2, 2, 0)


def test_tissue_f1():
    gt = np.array([[2, 2, 1, 255]])
    assert tissue_f1(np.array([[2, 1, 1, 2]]), gt) == pytest.approx(2 / 3)
    assert tissue_f1(np.array([[1, 1]]), np.array([[1, 255]])) == 1.0
    with pytest.raises(DegenerateInputError):
        tissue_f1(np.array([[1]]), np.array([[255]]))


def test_group_report_macro_and_micro():
    gt = PointAnnotations([(10, 10)], [TUMOR_CELL])
    hit = match_detections([Detection(10, 10, TUMOR_CELL, 1.0)], gt)
    miss = match_detections([], gt)
    rows = group_report([1.0, 0.0, 0.5], ["a", "b", "a"], [hit, miss, hit])
    assert [r["group"] for r in rows] == ["all", "a", "b"]
    assert rows[0]["n"] == 3 and rows[0]["mean_f1"] == pytest.approx(0.5)
    assert rows[1]["mean_f1"] == pytest.approx(0.75)
    assert "pooled_f1" in rows[1]
