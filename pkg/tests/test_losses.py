import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from celldet import losses
from celldet.errors import ParameterError


def _pair(seed, shape=(3, 6, 5)):
    rng = np.random.default_rng(seed)
    return rng.random(shape), rng.uniform(0.05, 1.0, shape)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["dice", "mse", "ce"]))
def test_gradients_match_finite_differences(seed, kind):
    y, y_hat = _pair(seed)
    fn = {"dice": losses.generalized_dice_loss, "mse": losses.weighted_mse_loss,
          "ce": losses.cross_entropy_loss}[kind]
    fd = oracles.finite_difference(lambda v: fn(y, v).value, y_hat)
    g = fn(y, y_hat).gradient
    assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_identical_inputs_give_zero(seed):
    rng = np.random.default_rng(seed)
    soft = rng.random((3, 5, 5))
    onehot = np.eye(3)[rng.integers(0, 3, (5, 5))].transpose(2, 0, 1)
    assert losses.weighted_mse_loss(soft, soft).value == 0.0
    assert abs(losses.generalized_dice_loss(onehot, onehot).value) <= 1e-5


def test_batch_axis_and_explicit_channel_axis():
    y, y_hat = _pair(3, (2, 3, 4, 4))
    a = losses.generalized_dice_loss(y, y_hat)
    b = losses.generalized_dice_loss(np.moveaxis(y, 1, -1), np.moveaxis(y_hat, 1, -1), channel_axis=-1)
    assert a.value == pytest.approx(b.value, rel=1e-12)


def test_class_weights():
    y = np.zeros((3, 2, 2))
    y[0] = 1
    y[1, 0, 0] = 1
    np.testing.assert_allclose(losses.dice_class_weights(y, eps=0.5), [1 / 4.5, 1 / 1.5, 1 / 0.5])
    mass = np.array([4.0, 1.0, 0.0])
    np.testing.assert_allclose(losses.mse_class_weights(y, eps=1e-6), 5.0 / (mass + 1e-6))


def test_weights_override_and_validation():
    y, y_hat = _pair(4)
    w = np.array([1.0, 2.0, 3.0])
    r = losses.weighted_mse_loss(y, y_hat, weights=w)
    expect = sum(w[c] * ((y[c] - y_hat[c]) ** 2).mean() for c in range(3))
    assert r.value == pytest.approx(expect, rel=1e-12)
    fd = oracles.finite_difference(lambda v: losses.generalized_dice_loss(y, v, weights=w).value, y_hat)
    np.testing.assert_allclose(losses.generalized_dice_loss(y, y_hat, weights=w).gradient, fd, atol=1e-7)
    for bad in ([1.0, 2.0], [1.0, -1.0, 1.0], [1.0, np.nan, 1.0]):
        with pytest.raises(ParameterError):
            losses.weighted_mse_loss(y, y_hat, weights=bad)
    with pytest.raises(ParameterError):
        losses.weighted_mse_loss(y, y_hat[:2])


def test_cross_entropy_mask():
    y, y_hat = _pair(5)
    valid = np.zeros((6, 5), bool)
    valid[:3] = True
    full = losses.cross_entropy_loss(y[:, :3], y_hat[:, :3]).value
    assert losses.cross_entropy_loss(y, y_hat, valid=valid).value == pytest.approx(full)
    assert np.all(losses.cross_entropy_loss(y, y_hat, valid=valid).gradient[:, 3:] == 0)
