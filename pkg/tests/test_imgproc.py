import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from celldet import imgproc
from celldet.ensemble import D4
from celldet.errors import BoundsError, DegenerateInputError, ParameterError

small = arrays(np.float64, st.tuples(st.integers(3, 14), st.integers(3, 14)),
               elements=st.floats(0, 1, allow_nan=False))


def test_kernel_normalised_and_symmetric():
    for s in (0.5, 1.0, 2.5, 4.0):
        k = imgproc.gaussian_kernel(s)
        assert len(k) == int(math.ceil(4 * s)) + 1
        assert k[0] + 2 * k[1:].sum() == pytest.approx(1.0, abs=1e-15)


def test_blur_matches_dense_convolution(rng):
    img = rng.random((20, 17))
    for s in (0.7, 1.5, 3.0):
        np.testing.assert_allclose(imgproc.gaussian_blur(img, s), oracles.blur_dense(img, s),
                                   atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(3, 14).map(lambda n: (n, n)),
              elements=st.floats(0, 1, allow_nan=False)), st.floats(0.3, 3.0))
def test_blur_is_exactly_dihedral_equivariant(img, sigma):
    base = imgproc.gaussian_blur(img, sigma)
    for t in D4:
        assert np.array_equal(imgproc.gaussian_blur(t.apply(img), sigma), t.apply(base))


@settings(max_examples=40, deadline=None)
@given(small, st.floats(0.3, 3.0))
def test_blur_preserves_range_and_mean_of_constants(img, sigma):
    out = imgproc.gaussian_blur(img, sigma)
    assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12
    const = np.full_like(img, 0.37)
    np.testing.assert_allclose(imgproc.gaussian_blur(const, sigma), const, atol=1e-15)


def test_blur_rejects_bad_sigma():
    with pytest.raises(ParameterError):
        imgproc.gaussian_blur(np.zeros((4, 4)), 0)


def test_resize_corner_aligned(rng):
    a = rng.random((2, 5, 7))
    out = imgproc.resize(a, 9, 13)
    assert out.shape == (2, 9, 13)
    np.testing.assert_allclose(out[:, [0, 0, -1, -1], [0, -1, 0, -1]], a[:, [0, 0, -1, -1], [0, -1, 0, -1]])
    np.testing.assert_allclose(imgproc.resize(a, 5, 7), a)
    near = imgproc.resize(np.array([[1, 2], [3, 4]]), 4, 4, "nearest")
    assert set(np.unique(near)) == {1, 2, 3, 4}


def test_crop_bounds(rng):
    a = rng.random((6, 8))
    assert np.array_equal(imgproc.crop(a, 2, 1, 3, 4), a[1:5, 2:5])
    with pytest.raises(BoundsError):
        imgproc.crop(a, 6, 0, 3, 3)


def test_otsu_matches_exhaustive_and_separates(rng):
    vals = np.concatenate([rng.normal(0.2, 0.03, 300), rng.normal(0.8, 0.03, 200)])
    t = imgproc.otsu_threshold(vals)
    assert t == oracles.otsu_exhaustive(vals)
    assert (vals[:300] <= t).all() and (vals[300:] > t).all()
    with pytest.raises(DegenerateInputError):
        imgproc.otsu_threshold(np.ones(10))


@settings(max_examples=40, deadline=None)
@given(arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_edt_matches_brute_force(mask):
    assert np.array_equal(imgproc.euclidean_distance_transform(mask), oracles.edt_brute(mask))


def test_edt_all_foreground_sentinel():
    assert np.all(imgproc.euclidean_distance_transform(np.ones((3, 4), bool)) == math.hypot(3, 4))


def test_components_and_cleanup():
    m = np.zeros((10, 10), bool)
    m[1:4, 1:4] = True
    m[2, 2] = False  # hole
    m[7, 7] = True  # speck
    lab = imgproc.connected_components(m)
    assert lab.max() == 2 and lab[1, 1] == 1 and lab[7, 7] == 2
    clean = imgproc.remove_small_objects_and_fill_holes(m, 3)
    assert clean[2, 2] and not clean[7, 7]


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (12, 12), elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0])),
       st.integers(1, 4), st.sampled_from([0.0, 0.3, 0.6]))
def test_peaks_match_greedy_oracle(a, md, thr):
    got = imgproc.peak_local_max(a, md, thr)
    assert np.array_equal(got, oracles.peaks_greedy(a, md, thr))
    if len(got) > 1:
        d = np.hypot(*(got[:, None, :] - got[None, :, :]).transpose(2, 0, 1))
        assert d[~np.eye(len(got), dtype=bool)].min() >= md


def test_peaks_reject_bad_input():
    with pytest.raises(ParameterError):
        imgproc.peak_local_max(np.zeros((4, 4)), 0, 0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_watershed_matches_priority_flood(seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((12, 12)) < 0.8
    elev = rng.integers(0, 4, (12, 12)).astype(float)
    markers = np.zeros((12, 12), np.int32)
    inside = np.argwhere(mask)
    if len(inside) < 3:
        return
    for lab, (y, x) in enumerate(inside[rng.choice(len(inside), 3, replace=False)], 1):
        markers[y, x] = lab
    got = imgproc.watershed(elev, markers, mask)
    assert np.array_equal(got, oracles.flood_oracle(elev, markers, mask))
    assert np.all(got[~mask] == 0)


def test_center_of_mass():
    lab = np.zeros((6, 6), int)
    lab[0:3, 0:3] = 1
    lab[4, 4:6] = 2
    ids, xy = imgproc.center_of_mass(lab)
    assert list(ids) == [1, 2]
    assert np.array_equal(xy, [[1, 1], [5, 4]])
