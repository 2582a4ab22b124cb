import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from celldet.data import TISSUE_BACKGROUND, TISSUE_CANCER, TISSUE_UNKNOWN, PatchRegistration
from celldet.ensemble import (D4, IDENTITY, GeomTransform, average_predictions, compose_ctm_input,
                              crop_upsample_tissue, ensemble_predict, leak_tissue_labels,
                              tta_predict)
from celldet.errors import ParameterError, RegistrationError, ShapeError
from celldet.imgproc import gaussian_blur

transforms = st.sampled_from(D4)


@settings(max_examples=50, deadline=None)
@given(transforms, st.integers(0, 2 ** 32 - 1))
def test_round_trip_and_points(t, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((2, 7, 7))
    assert np.array_equal(t.invert(t.apply(a)), a)
    # a marked pixel moves where apply_points says
    img = np.zeros((5, 9)) if t.rotation % 2 == 0 else np.zeros((9, 9))
    h, w = img.shape
    x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
    img[y, x] = 1
    (px, py), = t.apply_points([(x, y)], h, w)
    assert t.apply(img)[int(py), int(px)] == 1


@settings(max_examples=50, deadline=None)
@given(transforms, transforms)
def test_composition(a, b):
    img = np.arange(36.0).reshape(6, 6)
    assert np.array_equal(a.then(b).apply(img), b.apply(a.apply(img)))


def test_group_properties():
    assert len(set(D4)) == 8 and IDENTITY == GeomTransform()
    with pytest.raises(ParameterError):
        GeomTransform(4)
    with pytest.raises(ShapeError):
        GeomTransform(1).apply(np.zeros((3, 4)))


def test_tta_of_equivariant_model_is_exact(rng):
    model = lambda x: gaussian_blur(x, 1.3) ** 2
    x = rng.random((3, 16, 16))
    assert np.array_equal(tta_predict(model, x), model(x))


def test_tta_symmetrises_non_equivariant_model(rng):
    model = lambda x: np.cumsum(x, axis=-1)
    x = rng.random((1, 8, 8))
    out = tta_predict(model, x)
    for t in D4:
        np.testing.assert_allclose(tta_predict(model, t.apply(x)), t.apply(out), atol=1e-12)


def test_average_and_ensemble(rng):
    preds = [rng.random((3, 4, 4)) for _ in range(3)]
    np.testing.assert_allclose(average_predictions(preds), np.mean(preds, axis=0))
    assert np.array_equal(average_predictions([preds[0]] * 8), preds[0])
    with pytest.raises(ParameterError):
        average_predictions([])
    models = [lambda x, k=k: x * k for k in (1.0, 3.0)]
    x = rng.random((1, 6, 6))
    np.testing.assert_allclose(ensemble_predict(models, x), 2 * x)
    np.testing.assert_allclose(ensemble_predict(models, x, tta=True), 2 * x)
    np.testing.assert_allclose(ensemble_predict(models, x, tta=True, tta_inside=False), 2 * x)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 20), st.integers(0, 20), st.integers(2, 16), st.integers(2, 16),
       st.integers(1, 30), st.integers(1, 30))
def test_crop_upsample_matches_bilinear_oracle(x0, y0, ew, eh, oh, ow):
    rng = np.random.default_rng(x0 * 31 + y0)
    tissue = rng.random((2, 40, 40))
    reg = PatchRegistration(0.8, 0.2, (x0, y0), (ew, eh))
    got = crop_upsample_tissue(tissue, reg, oh, ow)
    np.testing.assert_allclose(got, oracles.crop_upsample_oracle(tissue, x0, y0, ew, eh, oh, ow),
                               atol=1e-6)


def test_compose_and_registration_errors(rng):
    cell = rng.random((3, 32, 32))
    tissue = rng.random((2, 32, 32))
    reg = PatchRegistration.centered((32, 32), (32, 32))
    out = compose_ctm_input(cell, tissue, reg)
    assert out.shape == (5, 32, 32) and np.array_equal(out[:3], cell)
    with pytest.raises(RegistrationError):
        compose_ctm_input(cell, tissue, PatchRegistration(0.8, 0.2, (30, 30), (8, 8)))


def test_leak_keeps_unknown_prediction(rng):
    pred = rng.random((2, 3, 3))
    gt = np.array([[1, 2, 255]] * 3)
    out = leak_tissue_labels(pred, gt)
    assert np.array_equal(out[:, :, 0], np.array([[1] * 3, [0] * 3]))
    assert np.array_equal(out[:, :, 1], np.array([[0] * 3, [1] * 3]))
    assert np.array_equal(out[:, :, 2], pred[:, :, 2])
    with pytest.raises(ParameterError):
        leak_tissue_labels(pred, np.full((3, 3), 7))
