"""Per-pixel softmax classifier over multi-scale handcrafted features.

Every feature is either a pointwise function of the input or a Gaussian blur
of one, and logits are accumulated feature by feature, so the model is exactly
equivariant to flips and quarter turns of its input.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import imgproc


@dataclass
class FeatureConfig:
    blur_scales: tuple = (1.0, 2.0, 4.0, 8.0)
    include_tissue_channels: bool = False
    image_channels: int = 3
    tissue_channels: int = 2

    @property
    def n_features(self):
        c = self.image_channels
        n = c + 2 * c * len(self.blur_scales)
        if self.include_tissue_channels:
            n += self.tissue_channels
        return n

    def to_dict(self):
        d = asdict(self)
        d["blur_scales"] = list(self.blur_scales)
        return d


def extract_features(cell_img, tissue_channels=None, cfg=None):
    """Stack of ``(F, H, W)`` features.

    Order: raw channels; for each blur scale the blurred channels followed by
    the local standard deviation at that scale; then tissue channels when the
    config asks for them.
    """
    cfg = cfg or FeatureConfig()
    img = np.asarray(cell_img, dtype=np.float64)
    feats = [img]
    sq = img * img
    for s in cfg.blur_scales:
        m = imgproc.gaussian_blur(img, s)
        var = imgproc.gaussian_blur(sq, s) - m * m
        feats += [m, np.sqrt(np.maximum(var, 0.0))]
    if cfg.include_tissue_channels:
        if tissue_channels is None:
            raise ValueError("feature config expects tissue channels")
        t = np.asarray(tissue_channels, dtype=np.float64)
        if t.shape[-2:] != img.shape[-2:]:
            raise ValueError("tissue channels not aligned with the image")
        feats.append(t)
    return np.concatenate(feats, axis=0)


def softmax(z):
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass
class PixelModel:
    feature_config: FeatureConfig
    n_classes: int = 3
    weights: np.ndarray = None
    bias: np.ndarray = None
    feat_mean: np.ndarray = None
    feat_std: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = self.feature_config.n_features
        if self.weights is None:
            self.weights = np.zeros((f, self.n_classes))
        if self.bias is None:
            self.bias = np.zeros(self.n_classes)
        if self.feat_mean is None:
            self.feat_mean = np.zeros(f)
        if self.feat_std is None:
            self.feat_std = np.ones(f)

    def copy(self):
        return PixelModel(self.feature_config, self.n_classes, self.weights.copy(),
                          self.bias.copy(), self.feat_mean.copy(), self.feat_std.copy(),
                          dict(self.meta))

    def fit_normalisation(self, feature_stacks):
        total = sum(f.shape[1] * f.shape[2] for f in feature_stacks)
        mean = sum(f.sum(axis=(1, 2)) for f in feature_stacks) / total
        sq = sum(((f - mean[:, None, None]) ** 2).sum(axis=(1, 2)) for f in feature_stacks)
        std = np.sqrt(sq / total)
        self.feat_mean = mean
        self.feat_std = np.where(std > 1e-8, std, 1.0)

    def normalise(self, feats):
        return (feats - self.feat_mean[:, None, None]) / self.feat_std[:, None, None]

    def logits(self, nfeats):
        # feature-by-feature accumulation keeps each pixel's arithmetic identical
        # regardless of where the pixel sits
        h, w = nfeats.shape[-2:]
        z = np.empty((self.n_classes, h, w))
        for k in range(self.n_classes):
            acc = np.full((h, w), self.bias[k])
            for f in range(nfeats.shape[0]):
                acc = acc + self.weights[f, k] * nfeats[f]
            z[k] = acc
        return z

    def predict_features(self, feats):
        return softmax(self.logits(self.normalise(feats)))

    def predict(self, cell_img, tissue_channels=None):
        feats = extract_features(cell_img, tissue_channels, self.feature_config)
        return self.predict_features(feats)

    def __call__(self, x):
        """Predict from a stacked input: image channels, then tissue channels if used."""
        x = np.asarray(x, dtype=np.float64)
        c = self.feature_config.image_channels
        tissue = x[c:] if self.feature_config.include_tissue_channels else None
        return self.predict(x[:c], tissue)

    def to_arrays(self, prefix=""):
        return {
            prefix + "weights": self.weights,
            prefix + "bias": self.bias,
            prefix + "feat_mean": self.feat_mean,
            prefix + "feat_std": self.feat_std,
        }
