"""Command-line interface: ``celldet <subcommand> ... --out DIR``.

Every run writes ``manifest.json`` into its output directory holding the
resolved config, the seed, the parsed arguments and SHA-256 digests of all
inputs and outputs. ``celldet replay MANIFEST --out DIR`` re-runs it.
Failures exit nonzero and print a JSON error report on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, io
from .config import RunConfig, load_config
from .data import CHANNEL_NAMES, GT_FORMATS, TISSUE_CHANNEL_NAMES, TUMOR_CELL
from .ensemble import ensemble_predict
from .errors import CellDetError, ParseError
from .evaluation import f1_scores, group_report, match_detections, pooled
from .groundtruth import make_gt, um_to_px
from .postprocess import detect_cells
from .trainbench import experiments
from .trainbench.synth import SceneParams, make_scenes
from .trainbench.training import (LOSS_FOR_FORMAT, TrainConfig, default_augment_for,
                                  new_cell_model, new_tissue_model, tissue_context,
                                  tissue_samples, train, train_samples)

EXIT_ERROR = 1
EXIT_USAGE = 2
_FORMAT_ALIASES = {"soft": "soft_is", "hard": "hard_is"}


class UsageError(CellDetError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers ---------------------------------------------------------------------

def _fmt(name):
    fmt = _FORMAT_ALIASES.get(name, name)
    if fmt not in GT_FORMATS:
        raise UsageError(f"unknown format {name!r}")
    return fmt


def _digests(paths):
    """sha256 of every input file; directories contribute each file inside."""
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(q for q in p.rglob("*") if q.is_file()):
                out[str(f)] = io.sha256_file(f)
        elif p.exists():
            out[str(p)] = io.sha256_file(p)
        else:
            raise ParseError("input not found", str(p))
    return out


def _pool_map(fn, items, workers):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _scene_params(cfg, **overrides):
    d = asdict(cfg.scene)
    d["cell_mpp"] = cfg.registration.cell_mpp
    d["tissue_mpp"] = cfg.registration.tissue_mpp
    d.update({k: v for k, v in overrides.items() if v is not None})
    return SceneParams(**d)


def _load_models(path, folds=None):
    models, meta = io.read_models(path)
    if folds is not None:
        if folds < 1 or folds > len(models):
            raise UsageError(f"--folds {folds} but {path} holds {len(models)} fold model(s)")
        models = models[:folds]
    return models, meta


def _tissue_pred(models, scene):
    return ensemble_predict(models, scene.tissue_img)


# -- subcommands -------------------------------------------------------------------
# Each returns the list of input paths it consumed.

def cmd_synth(args, cfg, out):
    params = _scene_params(cfg, rho=args.rho, cue_strength=args.cue_strength)
    scenes = make_scenes(cfg.seed, args.count, params)
    _pool_map(lambda s: io.write_scene(out / f"scene_{s.scene_id:03d}", s), scenes, args.workers)
    return []


def cmd_gt(args, cfg, out):
    scene = io.read_scene(args.scene)
    fmt = _fmt(args.format)
    sigma_um = cfg.gt.sigma_um if args.sigma_um is None else args.sigma_um
    radius = cfg.gt.radius_px if args.radius_px is None else args.radius_px
    h, w = scene.shape
    gt = make_gt(fmt, scene.annotations, h, w, scene.instances, radius,
                 um_to_px(sigma_um, scene.registration.cell_mpp))
    io.write_map_pngs(out, "gt", gt.maps)
    io.write_json(out / "gt_params.json", {"format": fmt, "sigma_um": sigma_um,
                                           "radius_px": radius})
    return [args.scene]


def _train_config(cfg, loss_kind, folds):
    d = asdict(cfg.train)
    d.update(loss_kind=loss_kind, seed=cfg.seed)
    if folds is not None:
        d["k_folds"] = folds
    return TrainConfig(**d)


def cmd_train(args, cfg, out):
    scenes = [io.read_scene(d) for d in args.scenes]
    inputs = list(args.scenes)
    augment = None
    if args.augment:
        a = asdict(cfg.augment)
        a.update(crop_hw=default_augment_for(scenes[0].shape[0]).crop_hw, seed=cfg.seed)
        augment = type(cfg.augment)(**a)
    if args.target == "tissue":
        tcfg = _train_config(cfg, "cross_entropy", args.folds)
        res = train_samples(new_tissue_model(), tissue_samples(scenes), tcfg, augment)
        meta = {"target": "tissue", "channels": list(TISSUE_CHANNEL_NAMES)}
    else:
        fmt = _fmt(args.format)
        tcfg = _train_config(cfg, LOSS_FOR_FORMAT[fmt], args.folds)
        tissue_preds = None
        if args.tissue != "none":
            if not args.tissue_model:
                raise UsageError(f"--tissue {args.tissue} needs --tissue-model")
            tmodels, _ = _load_models(args.tissue_model)
            inputs.append(args.tissue_model)
            tissue_preds = [_tissue_pred(tmodels, s) for s in scenes]
        sigma_px = um_to_px(cfg.gt.sigma_um, cfg.registration.cell_mpp)
        res = train(new_cell_model(args.tissue != "none"), scenes, fmt, tcfg, augment,
                    args.oversample, args.tissue, tissue_preds, sigma_px, cfg.gt.radius_px)
        meta = {"target": "cell", "format": fmt, "tissue": args.tissue,
                "channels": list(CHANNEL_NAMES)}
    io.write_models(out / "model.json", res.models, meta)
    io.write_json(out / "loss.json", {"train_loss": res.train_loss, "val_loss": res.val_loss})
    return inputs


def cmd_predict(args, cfg, out):
    models, meta = _load_models(args.model, args.folds)
    inputs = [args.model] + list(args.scenes)
    tissue_models = None
    if meta.get("target") == "tissue":
        names = TISSUE_CHANNEL_NAMES
    else:
        names = CHANNEL_NAMES
        uses_tissue = models[0].feature_config.include_tissue_channels
        if uses_tissue and args.tissue == "none":
            raise UsageError("model expects tissue channels; pass --tissue and --tissue-model")
        if args.tissue != "none":
            if not uses_tissue:
                raise UsageError("model was trained without tissue channels")
            if not args.tissue_model:
                raise UsageError(f"--tissue {args.tissue} needs --tissue-model")
            tissue_models, _ = _load_models(args.tissue_model)
            inputs.append(args.tissue_model)

    def run(scene_dir):
        scene = io.read_scene(scene_dir)
        if meta.get("target") == "tissue":
            x = scene.tissue_img
        else:
            x = scene.cell_img
            if tissue_models is not None:
                t = tissue_context(scene, args.tissue, _tissue_pred(tissue_models, scene))
                x = np.concatenate([x, t])
        pred = ensemble_predict(models, x, tta=args.tta)
        io.write_map_pngs(out / Path(scene_dir).name, "pred", pred, names)

    _pool_map(run, args.scenes, args.workers)
    return inputs


def cmd_postprocess(args, cfg, out):
    for d in args.pred:
        index = Path(d) / "pred.json" if Path(d).is_dir() else Path(d)
        pred, names = io.read_map_pngs(index)
        if tuple(names) != CHANNEL_NAMES:
            raise ParseError(f"expected cell channels {CHANNEL_NAMES}, got {names}", str(index))
        dets = detect_cells(pred, args.mode, cfg.postproc)
        target = out / index.parent.name
        target.mkdir(parents=True, exist_ok=True)
        io.write_detections_csv(target / "detections.csv", dets)
    return list(args.pred)


def cmd_eval(args, cfg, out):
    if len(args.detections) != len(args.scenes):
        raise UsageError("give one --detections file per --scenes directory")
    results, organs, per_scene = [], [], []
    for det_path, scene_dir in zip(args.detections, args.scenes):
        d = Path(scene_dir)
        meta = io.read_metadata(d / io.SCENE_FILES["meta"])
        gts = io.read_annotations_csv(d / io.SCENE_FILES["annotations"],
                                      meta["registration"].cell_mpp)
        m = match_detections(io.read_detections_csv(det_path), gts, cfg.eval)
        s = f1_scores(m)
        results.append(m)
        organs.append(meta.get("organ_tag", ""))
        per_scene.append({"scene": d.name, "organ": organs[-1], "mean_f1": s.mean_f1,
                          "f1_background_cell": s.per_class.get(1, 0.0),
                          "f1_tumor_cell": s.per_class.get(TUMOR_CELL, 0.0)})
    total = pooled(results)
    micro = f1_scores(total)
    rows = group_report([r["mean_f1"] for r in per_scene], organs, results)
    io.write_json(out / "metrics.json", {
        "micro": {"mean_f1": micro.mean_f1, "per_class": micro.per_class,
                  "precision": micro.precision, "recall": micro.recall,
                  "counts": {c: asdict(k) for c, k in total.counts.items()}},
        "macro_mean_f1": float(np.mean([r["mean_f1"] for r in per_scene])),
        "per_scene": per_scene, "by_organ": rows})
    io.write_table_csv(out / "by_organ.csv", rows)
    io.write_table_csv(out / "per_scene.csv", per_scene)
    return list(args.detections) + list(args.scenes)


def cmd_experiment(args, cfg, out):
    b = cfg.benchmark
    n_seeds = b.n_seeds if args.seeds is None else args.seeds
    seeds = list(range(cfg.seed, cfg.seed + n_seeds))
    tcfg = _train_config(cfg, cfg.train.loss_kind, b.k_folds)
    sigma_px = um_to_px(cfg.gt.sigma_um, cfg.registration.cell_mpp)
    if args.which == "ctm":
        params = _scene_params(cfg, rho=b.ctm_rho, cue_strength=b.ctm_cue_strength)
    else:
        params = _scene_params(cfg)
    plan = experiments.BenchmarkPlan(params, b.n_train, b.n_test)
    if args.which == "formats":
        res = experiments.run_format_experiment(plan, seeds, tcfg, cfg.postproc, cfg.eval,
                                                sigma_px)
    elif args.which == "sigma":
        res = experiments.run_sigma_ablation(plan, seeds, b.sigmas_um, tcfg, cfg.postproc,
                                             cfg.eval, cfg.registration.cell_mpp)
    else:
        res = experiments.run_ctm_experiment(plan, seeds, tcfg, cfg.postproc, cfg.eval,
                                             sigma_px)
        rows = [dict(model=k, **r) for k, v in res["by_organ"].items() for r in v]
        io.write_table_csv(out / "by_organ.csv", rows)
    res["plan"] = plan.to_dict()
    io.write_json(out / "metrics.json", res)
    io.write_table_csv(out / "table.csv", res["rows"])
    return []


_GT_COLOURS = {1: (0.1, 0.5, 1.0), 2: (1.0, 0.15, 0.15)}


def _paint(img, mask, colour):
    img[:, mask] = np.asarray(colour, dtype=np.float64)[:, None]


def cmd_render(args, cfg, out):
    """Overlay annotations (rings) and detections (crosses) on the cell image."""
    scene = io.read_scene(args.scene)
    img = scene.cell_img.copy()
    h, w = scene.shape
    yy, xx = np.mgrid[0:h, 0:w]
    r = cfg.gt.radius_px
    for (x, y), c in zip(scene.annotations.xy, scene.annotations.class_id):
        d = np.hypot(xx - x, yy - y)
        _paint(img, (d >= r - 0.5) & (d < r + 0.5), _GT_COLOURS[int(c)])
    inputs = [args.scene]
    if args.detections:
        inputs.append(args.detections)
        for det in io.read_detections_csv(args.detections):
            cross = ((np.abs(xx - det.x) == np.abs(yy - det.y))
                     & (np.abs(xx - det.x) <= 3))
            colour = (1.0, 0.9, 0.0) if det.class_id == TUMOR_CELL else (0.0, 1.0, 0.4)
            _paint(img, cross, colour)
    io.write_rgb_png(out / "overlay.png", img)
    return inputs


COMMANDS = {
    "synth": cmd_synth, "gt": cmd_gt, "train": cmd_train, "predict": cmd_predict,
    "postprocess": cmd_postprocess, "eval": cmd_eval, "experiment": cmd_experiment,
    "render": cmd_render,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config (default: $CELLDET_CONFIG)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", required=True, help="output directory")

    p = _Parser(prog="celldet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic patch pairs")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--rho", type=float)
    s.add_argument("--cue-strength", type=float)
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("gt", parents=[common], help="ground-truth maps for a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--format", required=True, choices=list(GT_FORMATS) + list(_FORMAT_ALIASES))
    s.add_argument("--sigma-um", type=float)
    s.add_argument("--radius-px", type=int)

    s = sub.add_parser("train", parents=[common], help="train a surrogate model")
    s.add_argument("--scenes", nargs="+", required=True)
    s.add_argument("--target", choices=("cell", "tissue"), default="cell")
    s.add_argument("--format", default="soft_is", choices=list(GT_FORMATS) + list(_FORMAT_ALIASES))
    s.add_argument("--tissue", choices=("none", "predicted", "leaked"), default="none")
    s.add_argument("--tissue-model")
    s.add_argument("--folds", type=int)
    s.add_argument("--augment", action="store_true")
    s.add_argument("--oversample", action="store_true")

    s = sub.add_parser("predict", parents=[common], help="probability maps for scenes")
    s.add_argument("--scenes", nargs="+", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--tta", action="store_true")
    s.add_argument("--tissue", choices=("none", "predicted", "leaked"), default="none")
    s.add_argument("--tissue-model")
    s.add_argument("--folds", type=int, help="use the first N fold models")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("postprocess", parents=[common], help="maps to detection CSVs")
    s.add_argument("--pred", nargs="+", required=True, help="prediction dirs or index JSONs")
    s.add_argument("--mode", choices=("soft", "hard"), default="soft")

    s = sub.add_parser("eval", parents=[common], help="score detections against annotations")
    s.add_argument("--detections", nargs="+", required=True)
    s.add_argument("--scenes", nargs="+", required=True)

    s = sub.add_parser("experiment", parents=[common], help="run an experiment harness")
    s.add_argument("--which", choices=("formats", "sigma", "ctm"), required=True)
    s.add_argument("--seeds", type=int, help="number of seeds (default from config)")

    s = sub.add_parser("render", parents=[common], help="overlay annotations/detections")
    s.add_argument("--scene", required=True)
    s.add_argument("--detections")

    s = sub.add_parser("replay", help="re-run a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    return p


_NOT_ARGS = ("command", "config", "seed", "out")


def run_command(command, args, cfg, out):
    """Run one subcommand into ``out`` and write its manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = COMMANDS[command](args, cfg, out)
    outputs = {str(f.relative_to(out)): io.sha256_file(f)
               for f in sorted(out.rglob("*")) if f.is_file() and f.name != "manifest.json"}
    manifest = {
        "version": __version__, "command": command, "seed": cfg.seed,
        "args": {k: v for k, v in vars(args).items() if k not in _NOT_ARGS},
        "config": cfg.to_dict(), "inputs": _digests(inputs), "outputs": outputs,
    }
    io.write_json(out / "manifest.json", manifest)
    return manifest


def replay(manifest_path, out):
    m = io.read_json(manifest_path)
    try:
        command, saved, config = m["command"], m["args"], m["config"]
    except KeyError as e:
        raise ParseError(f"manifest lacks {e}", str(manifest_path)) from None
    if command not in COMMANDS:
        raise ParseError(f"unknown command {command!r}", str(manifest_path))
    current = _digests(m.get("inputs", {}))
    changed = sorted(k for k, v in m.get("inputs", {}).items() if current.get(k) != v)
    if changed:
        raise ParseError(f"inputs changed since the manifest was written: {changed}",
                         str(manifest_path))
    cfg = RunConfig.from_dict(config, str(manifest_path))
    args = argparse.Namespace(**saved)
    return run_command(command, args, cfg, out)


def main(argv=None):
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        if command == "replay":
            replay(args.manifest, args.out)
        else:
            cfg = load_config(args.config, args.seed)
            run_command(command, args, cfg, args.out)
    except (CellDetError, OSError) as e:
        report = {"status": "error", "command": command, "error": type(e).__name__,
                  "message": str(e)}
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
        return EXIT_USAGE if isinstance(e, UsageError) else EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
