"""Gradient-based NLL minimization on the raw hyperparameters.

The optimizer is AdamW with decoupled weight decay, paired by default
with a cosine learning-rate schedule with hard restarts and linear
warmup. Optimization acts on the raw (softplus-inverse) parameters, so
the default initialization raw = 0 corresponds to constrained values
ln 2 ~ 0.693 and steps are unconstrained.

``warm_start_train`` implements subsampling warm starts: hyperparameters
are first trained on a small random subsample, then refined for a few
iterations on the full dataset. This costs full-size factorizations only
for the refinement steps while avoiding the hyperparameter bias of
training on the subsample alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .exceptions import InputError, TrainingError
from .gp import blas_scope, nll, nll_and_gradient
from .kernels import Hyperparameters, KernelSpec
from .sampling import random_subsample

_DIVERGENCE_MARGIN = 1e3


@dataclass
class TrainConfig:
    """Optimizer and schedule settings for one training run."""

    iterations: int = 100
    learning_rate: float = 0.1
    optimizer: str = "adamw"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    scheduler: str = "cosine_hard_restarts"
    num_cycles: int = 3
    warmup_fraction: float = 0.1
    seed: int = 0

    def validate(self):
        if self.iterations < 1:
            raise InputError(f"iterations must be >= 1, got {self.iterations}")
        if self.learning_rate < 0:
            raise InputError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer != "adamw":
            raise InputError(f"unsupported optimizer {self.optimizer!r}")
        if self.scheduler not in ("cosine_hard_restarts", "constant"):
            raise InputError(f"unsupported scheduler {self.scheduler!r}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise InputError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.num_cycles < 1:
            raise InputError(f"num_cycles must be >= 1, got {self.num_cycles}")


@dataclass
class WarmStartConfig:
    """Two-phase training sizes and rates.

    Defaults: train on 200 random points for 50 iterations at lr 0.1,
    then 5 full-data iterations at lr 0.02. The alternative preset
    ``twostage_preset`` runs 100 subsample iterations and 10 full-data
    iterations, all at lr 0.1.
    """

    m_train: int = 200
    sub_iterations: int = 50
    sub_lr: float = 0.1
    full_iterations: int = 5
    full_lr: float = 0.02

    @classmethod
    def sod_preset(cls) -> "WarmStartConfig":
        return cls(m_train=200, sub_iterations=50, sub_lr=0.1, full_iterations=5, full_lr=0.02)

    @classmethod
    def twostage_preset(cls) -> "WarmStartConfig":
        return cls(m_train=200, sub_iterations=100, sub_lr=0.1, full_iterations=10, full_lr=0.1)

    def validate(self):
        if self.m_train < 2:
            raise InputError(f"m_train must be >= 2, got {self.m_train}")
        for name in ("sub_iterations", "full_iterations"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.sub_lr <= 0 or self.full_lr <= 0:
            raise InputError("warm-start learning rates must be positive")


WARM_START_PRESETS = {
    "sod-table4": WarmStartConfig.sod_preset,
    "twostage-table5": WarmStartConfig.twostage_preset,
}


@dataclass
class TrainTrace:
    """Per-iteration NLL, constrained hyperparameters, and gradient norm.

    Entry t describes the state at the start of iteration t, before the
    update; the returned spec is the state after the last update.
    """

    nll: np.ndarray
    hyperparameters: np.ndarray  # (iterations, 3) constrained (l, sf, sn)
    grad_norm: np.ndarray
    learning_rates: np.ndarray

    def __len__(self):
        return self.nll.shape[0]

    @classmethod
    def concatenate(cls, a: "TrainTrace", b: "TrainTrace") -> "TrainTrace":
        return cls(
            nll=np.concatenate([a.nll, b.nll]),
            hyperparameters=np.vstack([a.hyperparameters, b.hyperparameters]),
            grad_norm=np.concatenate([a.grad_norm, b.grad_norm]),
            learning_rates=np.concatenate([a.learning_rates, b.learning_rates]),
        )


def schedule_factor(step: int, total: int, num_cycles: int, warmup_steps: int) -> float:
    """Multiplicative LR factor for one step of the hard-restart schedule.

    Linear warmup from 0, then ``num_cycles`` cosine decays from 1 to 0,
    each restarting hard at 1.
    """
    if step < warmup_steps:
        return step / max(1, warmup_steps)
    progress = (step - warmup_steps) / max(1, total - warmup_steps)
    if progress >= 1.0:
        return 0.0
    return max(0.0, 0.5 * (1.0 + math.cos(math.pi * ((num_cycles * progress) % 1.0))))


def lr_schedule(cfg: TrainConfig, iterations: Optional[int] = None) -> np.ndarray:
    """The full learning-rate sequence a run of ``train_gp`` will use."""
    cfg.validate()
    total = cfg.iterations if iterations is None else iterations
    if cfg.scheduler == "constant":
        return np.full(total, cfg.learning_rate)
    warmup = int(math.floor(cfg.warmup_fraction * total))
    return np.array(
        [
            cfg.learning_rate * schedule_factor(t, total, cfg.num_cycles, warmup)
            for t in range(total)
        ]
    )


def train_gp(spec_init: KernelSpec, X, y, cfg: TrainConfig, prior_mean=None):
    """Minimize the scaled NLL for ``cfg.iterations`` AdamW steps.

    Returns
    -------
    (KernelSpec, TrainTrace)
        The spec holds the raw parameters after the final update; the
        trace has exactly ``cfg.iterations`` entries.
    """
    cfg.validate()
    lrs = lr_schedule(cfg)
    theta = spec_init.params.raw_vector().astype(float)
    m = np.zeros(3)
    v = np.zeros(3)
    nlls = np.empty(cfg.iterations)
    hypers = np.empty((cfg.iterations, 3))
    gnorms = np.empty(cfg.iterations)
    initial_nll = None
    n = np.shape(X)[0]
    with blas_scope(n):
        for t in range(cfg.iterations):
            params = Hyperparameters.from_raw_vector(theta)
            spec = spec_init.with_params(params)
            value, grad = nll_and_gradient(spec, X, y, prior_mean)
            if not (np.isfinite(value) and np.all(np.isfinite(grad))):
                raise TrainingError(
                    f"non-finite NLL or gradient at iteration {t}", iteration=t
                )
            if initial_nll is None:
                initial_nll = value
            elif value > initial_nll + _DIVERGENCE_MARGIN:
                raise TrainingError(
                    f"training diverged at iteration {t}: NLL {value:.4g} vs "
                    f"initial {initial_nll:.4g}",
                    iteration=t,
                )
            nlls[t] = value
            hypers[t] = params.constrained_vector()
            gnorms[t] = float(np.linalg.norm(grad))
            # AdamW step with decoupled weight decay
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
            mhat = m / (1.0 - cfg.beta1 ** (t + 1))
            vhat = v / (1.0 - cfg.beta2 ** (t + 1))
            theta = theta - lrs[t] * (
                mhat / (np.sqrt(vhat) + cfg.epsilon) + cfg.weight_decay * theta
            )
    trace = TrainTrace(nll=nlls, hyperparameters=hypers, grad_norm=gnorms, learning_rates=lrs)
    return spec_init.with_params(Hyperparameters.from_raw_vector(theta)), trace


def warm_start_train(
    spec_init: KernelSpec, X, y, ws: WarmStartConfig, cfg: TrainConfig, prior_mean=None
):
    """Subsample training followed by a short full-data refinement.

    Stage 1 draws ``min(ws.m_train, n)`` points uniformly (seeded by
    ``cfg.seed``) and trains for ``ws.sub_iterations`` at ``ws.sub_lr``;
    stage 2 continues from those hyperparameters on the full data for
    ``ws.full_iterations`` at ``ws.full_lr``. The traces are concatenated.
    """
    ws.validate()
    cfg.validate()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if ws.m_train > n:
        raise InputError(f"m_train={ws.m_train} exceeds n={n}")
    y = np.asarray(y, dtype=float).ravel()
    idx = random_subsample(n, ws.m_train, cfg.seed)
    sub_mean = None if prior_mean is None else np.asarray(prior_mean).ravel()[idx]
    sub_cfg = replace(cfg, iterations=ws.sub_iterations, learning_rate=ws.sub_lr)
    spec_sub, trace_sub = train_gp(spec_init, X[idx], y[idx], sub_cfg, sub_mean)
    full_cfg = replace(cfg, iterations=ws.full_iterations, learning_rate=ws.full_lr)
    spec_full, trace_full = train_gp(spec_sub, X, y, full_cfg, prior_mean)
    return spec_full, TrainTrace.concatenate(trace_sub, trace_full)


def nll_contour(spec: KernelSpec, X, y, axis_pair=("lengthscale", "noise"), grids=None, prior_mean=None):
    """Evaluate the NLL on a grid over two hyperparameters.

    The off-axis parameter is held at its value in ``spec``. Grids are
    given in constrained units; defaults span [0.05, 5] log-spaced.

    Returns
    -------
    dict with keys ``axes`` (the two names), ``grid_a``, ``grid_b``, and
    ``values`` (len(grid_a) x len(grid_b)).
    """
    names = ("lengthscale", "outputscale", "noise")
    a, b = axis_pair
    if a not in names or b not in names or a == b:
        raise InputError(f"axis_pair must be two distinct of {names}, got {axis_pair}")
    if grids is None:
        grids = (np.geomspace(0.05, 5.0, 25), np.geomspace(0.05, 5.0, 25))
    grid_a = np.asarray(grids[0], dtype=float)
    grid_b = np.asarray(grids[1], dtype=float)
    if grid_a.size == 0 or grid_b.size == 0:
        raise InputError("contour grids must be non-empty")
    base = {
        "lengthscale": spec.params.lengthscale,
        "outputscale": spec.params.outputscale,
        "noise": spec.params.noise,
    }
    values = np.empty((grid_a.size, grid_b.size))
    for i, va in enumerate(grid_a):
        for j, vb in enumerate(grid_b):
            point = dict(base)
            point[a] = float(va)
            point[b] = float(vb)
            params = Hyperparameters.from_constrained(
                point["lengthscale"], point["outputscale"], point["noise"]
            )
            values[i, j] = nll(spec.with_params(params), X, y, prior_mean)
    return {"axes": (a, b), "grid_a": grid_a, "grid_b": grid_b, "values": values}
