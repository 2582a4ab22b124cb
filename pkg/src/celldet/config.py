"""Run configuration: every module's parameter block plus the seed.

A config file is JSON with any subset of the blocks below; unspecified values
keep their defaults. ``CELLDET_CONFIG`` names the default config file.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields

from .augment import AugmentParams
from .errors import CellDetError, ParseError, ParameterError
from .evaluation import EvalConfig
from .groundtruth import DEFAULT_RADIUS_PX
from .io import read_json
from .postprocess import PostprocParams
from .trainbench.synth import SceneParams
from .trainbench.training import TrainConfig

CONFIG_ENV = "CELLDET_CONFIG"


@dataclass
class GTParams:
    radius_px: int = DEFAULT_RADIUS_PX
    sigma_um: float = 3.0

    def __post_init__(self):
        if self.radius_px < 1 or self.sigma_um <= 0:
            raise ParameterError("radius_px >= 1 and sigma_um > 0 required")


@dataclass
class RegistrationParams:
    cell_mpp: float = 0.2
    tissue_mpp: float = 0.8

    def __post_init__(self):
        if self.cell_mpp <= 0 or self.tissue_mpp <= self.cell_mpp:
            raise ParameterError("need 0 < cell_mpp < tissue_mpp")


@dataclass
class BenchmarkParams:
    n_train: int = 12
    n_test: int = 8
    n_seeds: int = 5
    k_folds: int = 1
    sigmas_um: tuple = (1.0, 2.0, 3.0, 4.0)
    ctm_rho: float = 0.9
    ctm_cue_strength: float = 0.2

    def __post_init__(self):
        if min(self.n_train, self.n_test, self.n_seeds, self.k_folds) < 1:
            raise ParameterError("n_train, n_test, n_seeds and k_folds must be >= 1")
        self.sigmas_um = tuple(float(s) for s in self.sigmas_um)


_BLOCKS = {
    "postproc": PostprocParams,
    "augment": AugmentParams,
    "train": TrainConfig,
    "eval": EvalConfig,
    "registration": RegistrationParams,
    "gt": GTParams,
    "scene": SceneParams,
    "benchmark": BenchmarkParams,
}


@dataclass
class RunConfig:
    postproc: PostprocParams = field(default_factory=PostprocParams)
    augment: AugmentParams = field(default_factory=AugmentParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    gt: GTParams = field(default_factory=GTParams)
    scene: SceneParams = field(default_factory=SceneParams)
    benchmark: BenchmarkParams = field(default_factory=BenchmarkParams)
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d, source=None):
        """Build and validate a config; unknown blocks or keys are parse errors."""
        if not isinstance(d, dict):
            raise ParseError("config must be a JSON object", source)
        unknown = set(d) - set(_BLOCKS) - {"seed"}
        if unknown:
            raise ParseError(f"unknown config blocks {sorted(unknown)}", source)
        kwargs = {}
        for name, block in _BLOCKS.items():
            values = d.get(name, {})
            if not isinstance(values, dict):
                raise ParseError(f"block {name!r} must be an object", source)
            allowed = {f.name for f in fields(block)}
            bad = set(values) - allowed
            if bad:
                raise ParseError(f"unknown keys {sorted(bad)} in block {name!r}", source)
            values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
            try:
                kwargs[name] = block(**values)
            except CellDetError:
                raise
            except (TypeError, ValueError) as e:
                raise ParseError(f"block {name!r}: {e}", source) from None
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ParseError(f"seed must be a non-negative integer, got {seed!r}", source)
        return cls(seed=seed, **kwargs)

    def with_seed(self, seed):
        d = self.to_dict()
        d["seed"] = int(seed)
        return RunConfig.from_dict(d)


def load_config(path=None, seed=None):
    """Config from ``path``, else from ``$CELLDET_CONFIG``, else defaults; ``seed`` overrides."""
    path = path or os.environ.get(CONFIG_ENV) or None
    cfg = RunConfig.from_dict(read_json(path), str(path)) if path else RunConfig()
    return cfg if seed is None else cfg.with_seed(seed)
