"""Two-stage Gaussian process regression toolkit.

A GP regression library built around three ideas: separate the mean
(kernel ridge regression) from the uncertainty (zero-mean GP on
residuals), select the kernel family with a misspecification hypothesis
test, and warm-start hyperparameter training from a small random
subsample. Ships with a benchmark CLI and uncertainty-quantification
metrics.
"""

from ._backend import BACKEND_NAME, available_backends
from .config import ExperimentConfig
from .data import Dataset, Standardizer, emit_csv, ingest_csv, read_matrix_csv
from .exceptions import (
    InputError,
    NumericalError,
    ProcedureError,
    TrainingError,
    TwoStageGPError,
)
from .gp import (
    GPModel,
    KRRModel,
    PosteriorPrediction,
    fit_krr,
    fit_posterior,
    joint_test_nll,
    krr_cross_validate,
    krr_predict,
    nll,
    nll_gradient,
    predict,
)
from .kernels import (
    Hyperparameters,
    KernelFamily,
    KernelSpec,
    eval_base,
    gram_gradients,
    gram_matrix,
    softplus,
    softplus_inv,
)
from .metrics import (
    MetricsConfig,
    MetricsReport,
    compute_report,
    coverage,
    qice,
    rmse,
    test_nll,
    ua_rmse,
)
from .pipeline import (
    DirichletGPClassifier,
    GPNNModel,
    ScalableConfig,
    ScalableTwoStageModel,
    TwoStageConfig,
    TwoStageModel,
    dirichlet_transform,
    fit_gpnn,
    fit_two_stage_exact,
    fit_two_stage_scalable,
    gpnn_calibrate,
    nearest_neighbors,
    predict_gpnn,
    predict_two_stage,
    predict_two_stage_scalable,
)
from .sampling import DesignSample, FoldSplit, design_stats, fps, make_folds, random_subsample
from .selection import MisspecConfig, MisspecReport, aks, error_ratios, misspec_check
from .training import (
    TrainConfig,
    TrainTrace,
    WarmStartConfig,
    lr_schedule,
    nll_contour,
    train_gp,
    warm_start_train,
)
from .experiments import run_benchmark, run_contour, run_toy

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "available_backends",
    "Dataset",
    "DesignSample",
    "DirichletGPClassifier",
    "ExperimentConfig",
    "FoldSplit",
    "GPModel",
    "GPNNModel",
    "Hyperparameters",
    "InputError",
    "KernelFamily",
    "KernelSpec",
    "KRRModel",
    "MetricsConfig",
    "MetricsReport",
    "MisspecConfig",
    "MisspecReport",
    "NumericalError",
    "PosteriorPrediction",
    "ProcedureError",
    "ScalableConfig",
    "ScalableTwoStageModel",
    "Standardizer",
    "TrainConfig",
    "TrainTrace",
    "TrainingError",
    "TwoStageConfig",
    "TwoStageGPError",
    "TwoStageModel",
    "WarmStartConfig",
    "aks",
    "compute_report",
    "coverage",
    "design_stats",
    "dirichlet_transform",
    "emit_csv",
    "error_ratios",
    "eval_base",
    "fit_gpnn",
    "fit_krr",
    "fit_posterior",
    "fit_two_stage_exact",
    "fit_two_stage_scalable",
    "fps",
    "gpnn_calibrate",
    "gram_gradients",
    "gram_matrix",
    "ingest_csv",
    "joint_test_nll",
    "krr_cross_validate",
    "krr_predict",
    "lr_schedule",
    "make_folds",
    "misspec_check",
    "nearest_neighbors",
    "nll",
    "nll_contour",
    "nll_gradient",
    "predict",
    "predict_gpnn",
    "predict_two_stage",
    "predict_two_stage_scalable",
    "qice",
    "random_subsample",
    "read_matrix_csv",
    "rmse",
    "run_benchmark",
    "run_contour",
    "run_toy",
    "softplus",
    "softplus_inv",
    "test_nll",
    "train_gp",
    "ua_rmse",
    "warm_start_train",
]
