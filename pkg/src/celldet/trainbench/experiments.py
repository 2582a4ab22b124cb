"""Experiment harnesses: ground-truth formats, soft-IS sigma ablation, tissue context.

Each harness takes either a :class:`BenchmarkPlan` (fresh train/test scenes
per seed) or an explicit ``(train_scenes, test_scenes)`` pair reused for every
seed, and returns a JSON-serialisable dict holding a ``rows`` table plus
enough raw numbers to recompute every summary column.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..data import GT_FORMATS
from ..ensemble import tta_predict
from ..errors import ParameterError
from ..evaluation import EvalConfig, f1_scores, group_report, match_detections, pooled
from ..groundtruth import DEFAULT_SIGMA_PX, um_to_px
from ..postprocess import PostprocParams, detect_cells, mode_for_format
from .model import extract_features
from .synth import SceneParams, make_scenes
from .training import (LOSS_FOR_FORMAT, TrainConfig, cell_samples, new_cell_model,
                       new_tissue_model, tissue_context, tissue_samples, train_samples)

CTM_ROWS = ("cell-only", "SoftCTM", "SoftCTM+TTA", "TLLM", "TLLM+TTA")


@dataclass
class BenchmarkPlan:
    """Recipe for per-seed synthetic train/test splits."""

    scene_params: SceneParams = field(default_factory=SceneParams)
    n_train: int = 12
    n_test: int = 8

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ParameterError("n_train and n_test must be >= 1")

    def scenes(self, seed):
        train = make_scenes(1000 * seed, self.n_train, self.scene_params)
        test = make_scenes(1000 * seed + 1, self.n_test, self.scene_params)
        return train, test

    def to_dict(self):
        return {"scene_params": self.scene_params.to_dict(),
                "n_train": self.n_train, "n_test": self.n_test}


def experiment_train_config(loss_kind, seed, base=None):
    """Per-run training config: single model (no folds) unless ``base`` says otherwise."""
    base = base or TrainConfig(k_folds=1)
    return TrainConfig(**{**asdict(base), "loss_kind": loss_kind, "seed": int(seed)})


def _split(scenes, seed):
    if isinstance(scenes, BenchmarkPlan):
        return scenes.scenes(seed)
    train, test = scenes
    if not train or not test:
        raise ParameterError("need non-empty train and test scene lists")
    return list(train), list(test)


def _check_seeds(seeds):
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ParameterError("at least one seed required")
    return seeds


class _FeatureCache:
    """Feature stacks keyed by scene identity and tissue context, shared across runs."""

    def __init__(self):
        self._store = {}

    def get(self, scene, tissue, cfg, tag):
        key = (id(scene), tag, tuple(cfg.blur_scales), cfg.include_tissue_channels)
        if key not in self._store:
            self._store[key] = (scene, extract_features(scene.cell_img, tissue, cfg))
        return self._store[key][1]


def _train_cell(scenes, fmt, cfg, cache, tag="none", tissue_preds=None,
                sigma_px=DEFAULT_SIGMA_PX, include_tissue=False):
    samples = cell_samples(scenes, fmt, tag, tissue_preds, sigma_px=sigma_px)
    model = new_cell_model(include_tissue)
    for s, sc in zip(samples, scenes):
        s.features = cache.get(sc, s.tissue, model.feature_config, tag)
    return train_samples(model, samples, cfg)


def _evaluate(models, scenes, fmt, cache, post, ev, tag="none", tissue_preds=None, tta=False):
    """Per-scene match results of (averaged) model predictions."""
    results = []
    for i, sc in enumerate(scenes):
        tp = None if tissue_preds is None else tissue_preds[i]
        tissue = tissue_context(sc, tag, tp)
        if tta:
            x = sc.cell_img if tissue is None else np.concatenate([sc.cell_img, tissue])
            preds = [tta_predict(m, x) for m in models]
        else:
            feats = cache.get(sc, tissue, models[0].feature_config, tag)
            preds = [m.predict_features(feats) for m in models]
        pred = preds[0] if len(preds) == 1 else np.mean(preds, axis=0)
        dets = detect_cells(pred, mode_for_format(fmt), post)
        results.append(match_detections(dets, sc.annotations, ev))
    return results


def _counts_dict(m):
    return {str(c): {"tp": k.tp, "fp": k.fp, "fn": k.fn} for c, k in m.counts.items()}


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())


def run_format_experiment(scenes, seeds, train_cfg=None, post=None, ev=None,
                          sigma_px=DEFAULT_SIGMA_PX):
    """Mean F1 per ground-truth format (rows circle, hard_is, soft_is).

    Each seed trains one model per format with the format's loss and scores it
    with the format's postprocessor on the held-out scenes (counts pooled over
    scenes). ``std_f1`` is the spread over seeds.
    """
    seeds = _check_seeds(seeds)
    post = post or PostprocParams()
    ev = ev or EvalConfig()
    per_seed = {f: [] for f in GT_FORMATS}
    for seed in seeds:
        train, test = _split(scenes, seed)
        cache = _FeatureCache()
        for fmt in GT_FORMATS:
            cfg = experiment_train_config(LOSS_FOR_FORMAT[fmt], seed, train_cfg)
            res = _train_cell(train, fmt, cfg, cache, sigma_px=sigma_px)
            m = pooled(_evaluate(res.models, test, fmt, cache, post, ev))
            per_seed[fmt].append(f1_scores(m).mean_f1)
    rows = []
    for fmt in GT_FORMATS:
        mean, std = _mean_std(per_seed[fmt])
        rows.append({"format": fmt, "mean_f1": mean, "std_f1": std,
                     "n_seeds": len(seeds), "per_seed_f1": per_seed[fmt]})
    return {"experiment": "formats", "seeds": seeds, "std_over": "seeds", "rows": rows}


def run_sigma_ablation(scenes, seeds, sigmas_um=(1.0, 2.0, 3.0, 4.0), train_cfg=None,
                       post=None, ev=None, mpp=0.2):
    """F1, precision and recall of soft-IS models per Gaussian sigma (in micrometres).

    Per seed, counts are pooled over test scenes and the class-mean precision,
    recall and F1 taken; the table reports their mean over seeds and keeps the
    raw per-seed counts.
    """
    seeds = _check_seeds(seeds)
    sigmas_um = [float(s) for s in sigmas_um]
    if not sigmas_um or min(sigmas_um) <= 0:
        raise ParameterError("sigmas must be positive")
    post = post or PostprocParams()
    ev = ev or EvalConfig()
    stats = {s: {"f1": [], "precision": [], "recall": [], "counts": []} for s in sigmas_um}
    for seed in seeds:
        train, test = _split(scenes, seed)
        cache = _FeatureCache()
        cfg = experiment_train_config(LOSS_FOR_FORMAT["soft_is"], seed, train_cfg)
        for s in sigmas_um:
            res = _train_cell(train, "soft_is", cfg, cache, sigma_px=um_to_px(s, mpp))
            m = pooled(_evaluate(res.models, test, "soft_is", cache, post, ev))
            sc = f1_scores(m)
            st = stats[s]
            st["f1"].append(sc.mean_f1)
            st["precision"].append(sc.mean_precision)
            st["recall"].append(sc.mean_recall)
            st["counts"].append(_counts_dict(m))
    rows = []
    for s in sigmas_um:
        st = stats[s]
        rows.append({"sigma_um": s, "f1": float(np.mean(st["f1"])),
                     "precision": float(np.mean(st["precision"])),
                     "recall": float(np.mean(st["recall"])),
                     "n_seeds": len(seeds), "per_seed_counts": st["counts"]})
    return {"experiment": "sigma", "seeds": seeds, "rows": rows}


def run_ctm_experiment(scenes, seeds, train_cfg=None, post=None, ev=None,
                       sigma_px=DEFAULT_SIGMA_PX):
    """Cell-only versus tissue-context models, with and without TTA.

    A tissue model (cross-entropy) is trained per seed; SoftCTM models see its
    predictions, TLLM models see leaked tissue labels. All cell models use
    soft-IS targets. Returns the comparison table and a per-organ breakdown
    of per-scene mean F1 pooled over seeds.
    """
    seeds = _check_seeds(seeds)
    post = post or PostprocParams()
    ev = ev or EvalConfig()
    per_seed = {r: [] for r in CTM_ROWS}
    per_scene = {r: [] for r in CTM_ROWS}
    organs = []
    variants = (("cell-only", "none", False), ("SoftCTM", "predicted", True),
                ("TLLM", "leaked", True))
    for seed in seeds:
        train, test = _split(scenes, seed)
        organs += [sc.organ_tag for sc in test]
        cache = _FeatureCache()
        tcfg = experiment_train_config("cross_entropy", seed, train_cfg)
        tissue_models = train_samples(new_tissue_model(), tissue_samples(train), tcfg).models

        def tissue_pred(sc):
            p = [m.predict(sc.tissue_img) for m in tissue_models]
            return p[0] if len(p) == 1 else np.mean(p, axis=0)

        tp_train = [tissue_pred(sc) for sc in train]
        tp_test = [tissue_pred(sc) for sc in test]
        cfg = experiment_train_config(LOSS_FOR_FORMAT["soft_is"], seed, train_cfg)
        for name, tag, inc in variants:
            res = _train_cell(train, "soft_is", cfg, cache, tag, tp_train, sigma_px, inc)
            runs = [(name, False)] + ([(name + "+TTA", True)] if inc else [])
            for row, tta in runs:
                results = _evaluate(res.models, test, "soft_is", cache, post, ev,
                                    tag, tp_test, tta)
                per_seed[row].append(f1_scores(pooled(results)).mean_f1)
                per_scene[row] += [(f1_scores(r).mean_f1, r) for r in results]
    rows = []
    for r in CTM_ROWS:
        mean, std = _mean_std(per_seed[r])
        rows.append({"model": r, "mean_f1": mean, "std_f1": std,
                     "n_seeds": len(seeds), "per_seed_f1": per_seed[r]})
    by_organ = {r: group_report([f for f, _ in per_scene[r]], organs,
                                [m for _, m in per_scene[r]]) for r in CTM_ROWS}
    return {"experiment": "ctm", "seeds": seeds, "std_over": "seeds", "rows": rows,
            "by_organ": by_organ}


def ctm_benchmark_plan(rho=0.9, cue_strength=0.2, **kw):
    """Plan whose scenes carry a strong cell-tissue correlation and weak colour cues."""
    return BenchmarkPlan(SceneParams(rho=rho, cue_strength=cue_strength), **kw)
