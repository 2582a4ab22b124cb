import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from celldet.augment import (AugmentParams, expected_counts, oversample_weights_cells,
                             oversample_weights_tissue, random_augment)
from celldet.data import BACKGROUND_CELL, TUMOR_CELL, PointAnnotations
from celldet.errors import ParameterError
from celldet.groundtruth import circle_gt, soft_is_gt


def _scene(seed, n=40):
    rng = np.random.default_rng(seed)
    flat = rng.choice(n * n, size=6, replace=False)
    xy = np.stack([flat % n, flat // n], axis=1)
    pts = PointAnnotations(xy, rng.choice([BACKGROUND_CELL, TUMOR_CELL], 6))
    return rng.random((3, n, n)), pts


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["circle", "soft_is"]))
def test_points_follow_the_maps(seed, fmt):
    img, pts = _scene(seed)
    gts = (circle_gt(pts, 40, 40, 3) if fmt == "circle" else soft_is_gt(pts, None, 40, 40, 2.0))
    p = AugmentParams(crop_hw=32, per_aug_probability=0.7, rescale_range=0.0, seed=seed)
    img2, gts2, pts2, rec = random_augment(img, gts, pts, p)
    assert img2.shape == (3, 32, 32) and gts2.maps.shape == (3, 32, 32)
    assert img2.min() >= 0 and img2.max() <= 1
    for (x, y), c in zip(pts2.xy, pts2.class_id):
        assert gts2.maps[c, int(round(y)), int(round(x))] > 0.5
    if fmt == "circle":
        assert np.isin(gts2.maps, (0, 1)).all()


def test_no_augmentation_is_centre_crop():
    img, pts = _scene(1)
    gts = circle_gt(pts, 40, 40, 3)
    p = AugmentParams(crop_hw=32, per_aug_probability=0.0)
    img2, gts2, _, rec = random_augment(img, gts, pts, p)
    assert np.array_equal(img2, img[:, 4:36, 4:36])
    assert rec.scale == 1.0 and rec.brightness is None


def test_photometric_channels_limit(rng):
    img = rng.random((5, 20, 20))
    pts = PointAnnotations.empty()
    gts = circle_gt(pts, 20, 20, 3)
    p = AugmentParams(crop_hw=20, per_aug_probability=1.0, rescale_range=0.0)
    img2, _, _, rec = random_augment(img, gts, pts, p, photometric_channels=3)
    assert np.array_equal(img2[3:], rec.transform.apply(img[3:]))


def test_params_validation():
    with pytest.raises(ParameterError):
        AugmentParams(per_aug_probability=1.5)
    img, pts = _scene(2)
    with pytest.raises(ParameterError):
        random_augment(img, circle_gt(pts, 40, 40, 3), pts, AugmentParams(crop_hw=64))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=8))
def test_oversampling_balances_when_possible(counts):
    t, b = np.array(counts, dtype=float).T
    ann = [np.array([TUMOR_CELL] * int(i) + [BACKGROUND_CELL] * int(j)) for i, j in counts]
    w = oversample_weights_cells(ann)
    assert len(w) == len(counts) and (w >= 0).all() and w.sum() > 0
    et, eb = expected_counts(w, t, b)
    rare_surplus = ((t > b).any() if t.sum() < b.sum() else (b > t).any())
    if t.sum() > 0 and b.sum() > 0 and rare_surplus:
        assert et == pytest.approx(eb, rel=1e-9)


def test_tissue_weights_ignore_unknown():
    masks = [np.full((4, 4), 255), np.array([[2, 1], [1, 1]]), np.array([[2, 2], [2, 1]])]
    w = oversample_weights_tissue(masks)
    assert w[0] == 0
    c, b = expected_counts(w, [0, 1, 3], [0, 3, 1])
    assert c == pytest.approx(b)
