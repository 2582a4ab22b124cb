"""Class-balanced training objectives with analytic gradients.

Inputs are ground truth ``y`` and prediction ``y_hat`` of identical shape.
The channel axis defaults to 0 for ``(C, H, W)`` and to 1 for batched
``(B, C, H, W)`` arrays; every other axis is summed over as pixels, so a batch
is treated as one large image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

EPS = 1e-6


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray


def _prepare(y, y_hat, channel_axis):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ParameterError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    if channel_axis is None:
        channel_axis = 1 if y.ndim == 4 else 0
    if not -y.ndim <= channel_axis < y.ndim:
        raise ParameterError(f"channel axis {channel_axis} out of range for {y.ndim}-D input")
    channel_axis %= y.ndim
    pixel_axes = tuple(a for a in range(y.ndim) if a != channel_axis)
    return y, y_hat, channel_axis, pixel_axes


def _broadcast(per_class, ndim, channel_axis):
    shape = [1] * ndim
    shape[channel_axis] = -1
    return per_class.reshape(shape)


def dice_class_weights(y, eps=EPS, channel_axis=None):
    """Inverse class mass ``1 / (sum_i y_ic + eps)``."""
    y = np.asarray(y, dtype=np.float64)
    if channel_axis is None:
        channel_axis = 1 if y.ndim == 4 else 0
    axes = tuple(a for a in range(y.ndim) if a != channel_axis % y.ndim)
    return 1.0 / (y.sum(axis=axes) + eps)


def _given_weights(weights, n_classes):
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape != (n_classes,) or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ParameterError(f"need {n_classes} finite non-negative class weights")
    return w


def generalized_dice_loss(y, y_hat, eps=EPS, channel_axis=None, weights=None):
    """``1 - 2 * sum_c w_c sum_i y*y_hat / sum_c w_c sum_i (y + y_hat)``.

    ``weights`` replaces the per-call class weights, e.g. with weights computed
    once over a whole training set.
    """
    y, y_hat, ax, pix = _prepare(y, y_hat, channel_axis)
    w = dice_class_weights(y, eps, ax) if weights is None else _given_weights(weights, y.shape[ax])
    inter = float(np.sum(w * (y * y_hat).sum(axis=pix)))
    union = float(np.sum(w * (y + y_hat).sum(axis=pix)))
    if union == 0.0:
        return LossResult(0.0, np.zeros_like(y_hat))
    value = 1.0 - 2.0 * inter / union
    wb = _broadcast(w, y.ndim, ax)
    grad = -2.0 * wb * (y * union - inter) / union ** 2
    return LossResult(value, grad)


def mse_class_weights(y, eps=EPS, channel_axis=None):
    """Total mass over all classes divided by each class mass (+ eps)."""
    y = np.asarray(y, dtype=np.float64)
    if channel_axis is None:
        channel_axis = 1 if y.ndim == 4 else 0
    axes = tuple(a for a in range(y.ndim) if a != channel_axis % y.ndim)
    mass = y.sum(axis=axes)
    return mass.sum() / (mass + eps)


def weighted_mse_loss(y, y_hat, eps=EPS, channel_axis=None, weights=None):
    """``sum_c w_c * mean_i (y_ic - y_hat_ic)**2`` with class-balancing weights.

    ``weights`` replaces the per-call class weights.
    """
    y, y_hat, ax, pix = _prepare(y, y_hat, channel_axis)
    w = mse_class_weights(y, eps, ax) if weights is None else _given_weights(weights, y.shape[ax])
    n = y.size // y.shape[ax]
    diff = y - y_hat
    value = float(np.sum(w * (diff ** 2).sum(axis=pix)) / n)
    grad = -2.0 * _broadcast(w, y.ndim, ax) * diff / n
    return LossResult(value, grad)


def cross_entropy_loss(y, y_hat, valid=None, channel_axis=None, floor=1e-12):
    """Mean pixel-wise cross entropy ``-sum_c y log y_hat``.

    ``valid`` is an optional boolean pixel mask (no channel axis); masked-out
    pixels contribute nothing and the mean runs over valid pixels only.
    """
    y, y_hat, ax, pix = _prepare(y, y_hat, channel_axis)
    p = np.maximum(y_hat, floor)
    if valid is None:
        m = np.ones(tuple(y.shape[a] for a in pix), dtype=bool)
    else:
        m = np.asarray(valid, dtype=bool)
    mb = np.expand_dims(m, ax).astype(np.float64)
    n = max(int(m.sum()), 1)
    value = float(-(mb * y * np.log(p)).sum() / n)
    grad = -mb * y / p / n
    return LossResult(value, grad)
