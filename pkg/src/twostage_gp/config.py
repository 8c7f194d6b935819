"""Experiment configuration: a strict JSON schema.

Unknown keys are rejected everywhere so silent config drift cannot
change what an experiment runs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .exceptions import InputError
from .metrics import MetricsConfig
from .pipeline import ScalableConfig, TwoStageConfig
from .selection import MisspecConfig
from .training import WARM_START_PRESETS, TrainConfig, WarmStartConfig

METHODS = ("exact-gp", "aks-exact-gp", "two-stage-exact", "gpnn", "two-stage-gpnn")


def _fill_dataclass(cls, data: dict, context: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise InputError(
            f"unknown key(s) {sorted(unknown)} in {context}; allowed: {sorted(allowed)}"
        )
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            v = data[f.name]
            if isinstance(v, list):
                v = tuple(v)
            kwargs[f.name] = v
    return cls(**kwargs)


@dataclass
class DatasetConfig:
    path: str = ""
    name: Optional[str] = None
    has_header: bool = False


@dataclass
class ExperimentConfig:
    """Everything a benchmark run needs, resolvable from one JSON file."""

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    method: str = "two-stage-exact"
    kernel: str = "rbf"
    dictionary: Optional[tuple] = ("rbf", "matern32", "matern12")
    train: TrainConfig = field(default_factory=TrainConfig)
    warm_start: WarmStartConfig = field(default_factory=WarmStartConfig.twostage_preset)
    warm_start_preset: Optional[str] = None
    misspec: MisspecConfig = field(default_factory=lambda: MisspecConfig(rounds=20))
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    scalable: ScalableConfig = field(default_factory=ScalableConfig)
    stage1_mode: str = "cv"
    selection_iterations: int = 50
    add_residual_mean: Optional[bool] = None
    n_folds: int = 20
    train_fraction: float = 0.9
    seed: int = 0
    jobs: int = 1
    output: str = "out"

    def validate(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.n_folds < 1:
            raise InputError(f"n_folds must be >= 1, got {self.n_folds}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.jobs < 1:
            raise InputError(f"jobs must be >= 1, got {self.jobs}")
        if self.warm_start_preset is not None:
            if self.warm_start_preset not in WARM_START_PRESETS:
                raise InputError(
                    f"unknown warm_start_preset {self.warm_start_preset!r}; "
                    f"expected one of {sorted(WARM_START_PRESETS)}"
                )
            self.warm_start = WARM_START_PRESETS[self.warm_start_preset]()
        self.train.validate()
        self.warm_start.validate()
        self.misspec.validate()
        self.metrics.validate()
        return self

    def two_stage_config(self) -> TwoStageConfig:
        return TwoStageConfig(
            stage1_mode=self.stage1_mode,
            var_dictionary=self.dictionary,
            var_kernel=self.kernel,
            misspec=self.misspec,
            selection_trainer=TrainConfig(
                iterations=self.selection_iterations, seed=self.train.seed
            ),
            trainer=self.train,
            warm_start=self.warm_start,
            add_residual_mean=self.add_residual_mean,
            seed=self.seed,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise InputError("experiment config must be a JSON object")
        data = dict(data)
        nested = {
            "dataset": (DatasetConfig, "dataset"),
            "train": (TrainConfig, "train"),
            "warm_start": (WarmStartConfig, "warm_start"),
            "misspec": (MisspecConfig, "misspec"),
            "metrics": (MetricsConfig, "metrics"),
            "scalable": (ScalableConfig, "scalable"),
        }
        for key, (sub_cls, ctx) in nested.items():
            if key in data:
                v = data[key]
                if key == "dataset" and isinstance(v, str):
                    v = {"path": v}
                if not isinstance(v, dict):
                    raise InputError(f"config section {ctx!r} must be an object")
                data[key] = _fill_dataclass(sub_cls, v, ctx)
        cfg = _fill_dataclass(cls, data, "experiment config")
        return cfg.validate()

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)
