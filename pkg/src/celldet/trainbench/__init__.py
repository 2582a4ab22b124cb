"""Desk-scale training bench: synthetic scenes, a per-pixel surrogate model,
training loop and the experiment harnesses."""

from .model import FeatureConfig, PixelModel, extract_features
from .synth import SceneParams, SynthScene, make_scenes, synth_scene
from .training import TrainConfig, TrainResult, train
from .experiments import (BenchmarkPlan, ctm_benchmark_plan, run_ctm_experiment,
                          run_format_experiment, run_sigma_ablation)
