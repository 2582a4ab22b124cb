"""Mini-batch training of :class:`PixelModel` with the toolkit's losses."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import losses
from ..augment import AugmentParams, oversample_weights_cells, random_augment
from ..data import (TISSUE_BACKGROUND, TISSUE_CANCER, TISSUE_UNKNOWN, GroundTruthMaps,
                    PointAnnotations)
from ..ensemble import crop_upsample_tissue, leak_tissue_labels
from ..errors import ParameterError, TrainingError
from ..groundtruth import DEFAULT_RADIUS_PX, DEFAULT_SIGMA_PX, make_gt
from .model import FeatureConfig, PixelModel, extract_features, softmax

log = logging.getLogger(__name__)

LOSS_FOR_FORMAT = {"circle": "dice", "hard_is": "dice", "soft_is": "weighted_mse"}


@dataclass
class TrainConfig:
    loss_kind: str = "dice"
    epochs: int = 30
    learning_rate: float = 1e-2
    batch_size: int = 1
    optimizer: str = "adam"
    weight_decay: float = 0.0
    momentum: float = 0.0
    seed: int = 0
    k_folds: int = 5
    class_weighting: str = "dataset"

    def __post_init__(self):
        if self.loss_kind not in ("dice", "weighted_mse", "cross_entropy"):
            raise ParameterError(f"unknown loss {self.loss_kind!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.class_weighting not in ("dataset", "batch"):
            raise ParameterError(f"unknown class weighting {self.class_weighting!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.k_folds < 1:
            raise ParameterError("epochs >= 0, batch_size >= 1 and k_folds >= 1 required")
        if self.learning_rate < 0:
            raise ParameterError("learning rate must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class Sample:
    """One training item: image, optional tissue channels, target and pixel mask."""

    image: np.ndarray
    target: GroundTruthMaps
    points: PointAnnotations
    tissue: np.ndarray = None
    valid: np.ndarray = None
    scene_id: int = 0
    organ: str = ""
    features: np.ndarray = field(default=None, repr=False)


@dataclass
class TrainResult:
    models: list
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    @property
    def model(self):
        return self.models[0]


# -- sample construction ------------------------------------------------------

def tissue_onehot(gt):
    """One-hot [background, cancer] target plus the mask of labelled pixels."""
    gt = np.asarray(gt)
    y = np.stack([gt == TISSUE_BACKGROUND, gt == TISSUE_CANCER]).astype(np.float64)
    return y, gt != TISSUE_UNKNOWN


def tissue_samples(scenes):
    out = []
    for s in scenes:
        y, valid = tissue_onehot(s.tissue_gt)
        # tissue targets reuse the one-hot container with an empty cell channel
        maps = GroundTruthMaps(np.concatenate([y, np.zeros((1,) + y.shape[1:])]), "circle")
        out.append(Sample(s.tissue_img, maps, PointAnnotations.empty(), None, valid,
                          s.scene_id, s.organ_tag))
    return out


def tissue_context(scene, mode, tissue_pred=None):
    """Tissue channels aligned to the cell patch for ``mode`` in none/predicted/leaked."""
    if mode == "none":
        return None
    if tissue_pred is None:
        raise ParameterError(f"tissue mode {mode!r} needs a tissue prediction")
    if mode == "leaked":
        tissue_pred = leak_tissue_labels(tissue_pred, scene.tissue_gt)
    elif mode != "predicted":
        raise ParameterError(f"unknown tissue mode {mode!r}")
    return crop_upsample_tissue(tissue_pred, scene.registration, *scene.shape)


def cell_samples(scenes, fmt, tissue_mode="none", tissue_preds=None,
                 sigma_px=DEFAULT_SIGMA_PX, radius_px=DEFAULT_RADIUS_PX):
    out = []
    for i, s in enumerate(scenes):
        h, w = s.shape
        gt = make_gt(fmt, s.annotations, h, w, s.instances, radius_px, sigma_px)
        tp = None if tissue_preds is None else tissue_preds[i]
        t = tissue_context(s, tissue_mode, tp)
        out.append(Sample(s.cell_img, gt, s.annotations, t, None, s.scene_id, s.organ_tag))
    return out


# -- optimisation ---------------------------------------------------------------

class _Adam:
    def __init__(self, shapes, lr, weight_decay=0.0, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mh = m / (1 - self.b1 ** self.t)
            vh = v / (1 - self.b2 ** self.t)
            if self.wd:
                p -= self.lr * self.wd * p
            p -= self.lr * mh / (np.sqrt(vh) + self.eps)


class _SGD:
    def __init__(self, shapes, lr, weight_decay=0.0, momentum=0.0):
        self.lr, self.wd, self.mu = lr, weight_decay, momentum
        self.buf = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        for p, g, b in zip(params, grads, self.buf):
            g = g + self.wd * p
            b *= self.mu
            b += g
            p -= self.lr * b


def _loss(kind, y, y_hat, valid, class_weights=None):
    # batches arrive as (B, C, P)
    if kind == "dice":
        return losses.generalized_dice_loss(y, y_hat, channel_axis=1, weights=class_weights)
    if kind == "weighted_mse":
        return losses.weighted_mse_loss(y, y_hat, channel_axis=1, weights=class_weights)
    return losses.cross_entropy_loss(y, y_hat, valid=valid, channel_axis=1)


def dataset_class_weights(kind, targets, eps=losses.EPS):
    """Class weights of ``kind`` computed from the pooled mass of all ``(C, ...)`` targets."""
    mass = sum(np.asarray(t, dtype=np.float64).reshape(t.shape[0], -1).sum(axis=1)
               for t in targets)
    if kind == "dice":
        return 1.0 / (mass + eps)
    if kind == "weighted_mse":
        return mass.sum() / (mass + eps)
    return None


def batch_loss_and_grads(model, nfeats, y, kind, valid=None, class_weights=None):
    """Loss and gradients w.r.t. weights and bias.

    ``nfeats`` holds normalised features as ``(B, F, P)`` (pixels flattened)
    or ``(B, F, H, W)``; ``y`` and ``valid`` follow the same pixel layout.
    ``class_weights`` overrides the per-batch class weights of dice/MSE.
    """
    b, f = nfeats.shape[:2]
    nf = nfeats.reshape(b, f, -1)
    z = np.matmul(model.weights.T, nf) + model.bias[None, :, None]
    y_hat = np.moveaxis(softmax(np.moveaxis(z, 1, 0)), 0, 1)
    yy = np.asarray(y).reshape(b, y.shape[1], -1)
    vv = None if valid is None else np.asarray(valid).reshape(b, -1)
    res = _loss(kind, yy, y_hat, vv, class_weights)
    g = res.gradient
    dz = y_hat * (g - (y_hat * g).sum(axis=1, keepdims=True))
    gw = np.matmul(nf, np.swapaxes(dz, 1, 2)).sum(axis=0)
    gb = dz.sum(axis=(0, 2))
    return res.value, gw, gb


def sample_features(model, sample):
    """Features for a sample, cached on the sample when it is not augmented."""
    if sample.features is None:
        sample.features = extract_features(sample.image, sample.tissue, model.feature_config)
    return sample.features


def _augment_sample(sample, aug, rng):
    x = sample.image if sample.tissue is None else np.concatenate([sample.image, sample.tissue])
    c = sample.image.shape[0]
    tgt = sample.target
    valid = sample.valid
    if valid is not None:
        # carry the mask through the geometry as an extra one-hot-safe channel
        tgt = GroundTruthMaps(np.concatenate([tgt.maps[:2], valid[None].astype(float)]), tgt.format)
    x2, t2, p2, _ = random_augment(x, tgt, sample.points, aug, rng, photometric_channels=c)
    maps = t2.maps
    v2 = None
    if valid is not None:
        v2 = maps[2] > 0.5
        maps = np.concatenate([maps[:2], np.zeros((1,) + maps.shape[1:])])
    return Sample(x2[:c], GroundTruthMaps(maps, t2.format), p2,
                  x2[c:] if sample.tissue is not None else None, v2,
                  sample.scene_id, sample.organ)


def _flat(model, feats):
    f = feats.shape[0]
    return ((feats.reshape(f, -1) - model.feat_mean[:, None]) / model.feat_std[:, None])


def fit(model, samples, cfg, augment=None, sample_weights=None, val_samples=None):
    """Train ``model`` in place on ``samples``; returns per-epoch train/val losses."""
    if not samples:
        raise ParameterError("no training samples")
    rng = np.random.default_rng(cfg.seed)
    kind = cfg.loss_kind
    n_classes = model.n_classes
    y_channels = n_classes if kind == "cross_entropy" else 3
    if n_classes != y_channels:
        raise ParameterError(f"model has {n_classes} classes, loss expects {y_channels}")

    def target(s):
        t = s.target.maps[:n_classes] if kind == "cross_entropy" else s.target.maps
        return t.reshape(t.shape[0], -1)

    def valid_of(s):
        return None if s.valid is None else s.valid.reshape(-1)

    model.fit_normalisation([sample_features(model, s) for s in samples])
    flat = [_flat(model, sample_features(model, s)) for s in samples]
    val = None
    if val_samples:
        val = ([_flat(model, sample_features(model, s)) for s in val_samples],
               [target(s) for s in val_samples], [valid_of(s) for s in val_samples])

    # per-batch weights explode when a class is absent from a small batch
    cw = None
    if cfg.class_weighting == "dataset":
        cw = dataset_class_weights(kind, [target(s) for s in samples])

    params = [model.weights, model.bias]
    shapes = [p.shape for p in params]
    if cfg.optimizer == "adam":
        opt = _Adam(shapes, cfg.learning_rate, cfg.weight_decay)
    else:
        opt = _SGD(shapes, cfg.learning_rate, cfg.weight_decay, cfg.momentum)

    probs = None
    if sample_weights is not None:
        w = np.asarray(sample_weights, dtype=np.float64)
        if w.sum() <= 0:
            raise ParameterError("sample weights sum to zero")
        probs = w / w.sum()

    def stack_valid(vs):
        return None if vs[0] is None else np.stack(vs)

    train_curve, val_curve = [], []
    n = len(samples)
    for epoch in range(cfg.epochs):
        order = rng.choice(n, size=n, p=probs) if probs is not None else rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if augment is not None:
                batch = [_augment_sample(samples[i], augment, rng) for i in idx]
                nf = np.stack([_flat(model, sample_features(model, s)) for s in batch])
            else:
                batch = [samples[i] for i in idx]
                nf = np.stack([flat[i] for i in idx])
            y = np.stack([target(s) for s in batch])
            valid = stack_valid([valid_of(s) for s in batch])
            value, gw, gb = batch_loss_and_grads(model, nf, y, kind, valid, cw)
            if not np.isfinite(value) or not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
                raise TrainingError("non-finite loss or gradient", epoch)
            epoch_losses.append(value)
            if cfg.learning_rate > 0:
                opt.step(params, [gw, gb])
        train_curve.append(float(np.mean(epoch_losses)))
        if val is not None:
            vf, vy, vv = val
            # validation pixels of different-sized patches are pooled per sample
            value = float(np.mean([batch_loss_and_grads(model, f[None], t[None], kind,
                                                        None if v is None else v[None], cw)[0]
                                   for f, t, v in zip(vf, vy, vv)]))
            val_curve.append(value)
        log.debug("epoch %d loss %.5f", epoch, train_curve[-1])
    return train_curve, val_curve


def kfold_split(organs, k, seed=0):
    """Fold index per sample, stratified on organ tag."""
    organs = list(organs)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(organs), dtype=np.int64)
    offset = 0
    for tag in sorted(set(organs)):
        idx = np.array([i for i, o in enumerate(organs) if o == tag])
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return fold


def train_samples(model, samples, cfg, augment=None, oversample=False):
    """Train one model, or ``cfg.k_folds`` copies on stratified folds."""
    weights = None
    if oversample:
        weights = oversample_weights_cells([s.points for s in samples])
    if cfg.k_folds == 1:
        m = model.copy()
        tr, va = fit(m, samples, cfg, augment, weights)
        return TrainResult([m], tr, va)
    if len(samples) < cfg.k_folds:
        raise ParameterError(f"{len(samples)} samples cannot form {cfg.k_folds} folds")
    folds = kfold_split([s.organ for s in samples], cfg.k_folds, cfg.seed)
    models, tr_curves, va_curves = [], [], []
    for f in range(cfg.k_folds):
        tr_idx = np.flatnonzero(folds != f)
        va_idx = np.flatnonzero(folds == f)
        m = model.copy()
        w = None if weights is None else weights[tr_idx]
        fold_cfg = TrainConfig(**{**cfg.to_dict(), "seed": cfg.seed * 1000 + f})
        tr, va = fit(m, [samples[i] for i in tr_idx], fold_cfg, augment, w,
                     [samples[i] for i in va_idx])
        models.append(m)
        tr_curves.append(tr)
        va_curves.append(va)
    return TrainResult(models, np.mean(tr_curves, axis=0).tolist(),
                       np.mean(va_curves, axis=0).tolist())


def train(model, scenes, gts_format, cfg, augment=None, oversample=False,
          tissue_mode="none", tissue_preds=None, sigma_px=DEFAULT_SIGMA_PX,
          radius_px=DEFAULT_RADIUS_PX):
    """Train a cell model on synthetic scenes with ground truth in ``gts_format``."""
    if not scenes:
        raise ParameterError("at least one scene required")
    samples = cell_samples(scenes, gts_format, tissue_mode, tissue_preds, sigma_px, radius_px)
    return train_samples(model, samples, cfg, augment, oversample)


def new_cell_model(include_tissue=False, blur_scales=None):
    fc = FeatureConfig(include_tissue_channels=include_tissue)
    if blur_scales is not None:
        fc.blur_scales = tuple(blur_scales)
    return PixelModel(fc, n_classes=3)


def new_tissue_model(blur_scales=(1.0, 2.0, 4.0, 8.0)):
    return PixelModel(FeatureConfig(blur_scales=tuple(blur_scales)), n_classes=2)


def default_augment_for(size):
    """Augmentation defaults scaled from 896-of-1024 crops to a small patch."""
    return AugmentParams(crop_hw=int(size * 896 // 1024))
