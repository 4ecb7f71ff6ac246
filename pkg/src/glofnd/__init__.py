"""Contrastive representation learning with learned global false-negative
thresholds, plus a mini-batch top-k baseline, a bimodal two-tower variant,
synthetic benchmarks, exact oracles, and an experiment CLI."""

from .bimodal import (
    BimodalState,
    BimodalTrainState,
    TowerPair,
    bimodal_filtered_loss,
    bimodal_step,
)
from .config import RunConfig, build_config, parse_config_file
from .contrastive import (
    BatchView,
    FilterResult,
    LossConfig,
    StepMetrics,
    SurrogateState,
    TrainState,
    batch_similarity,
    build_batch_view,
    filtered_loss,
    fnc_filter,
    g_hat,
    grad_estimator,
    train_step,
    update_u,
)
from .encoder import EncoderGrads, EncoderParams, backward, forward, init_params
from .estimators import GlofndEncoder
from .metrics import (
    FnScores,
    ThresholdError,
    approx_optimal_lambda,
    fn_scores,
    optimal_lambda_full,
    predicted_fn_fraction_full,
    threshold_error,
)
from .numkit import SimilarityBlock, cosine_block, normalize_rows
from .runner import (
    run_eval,
    run_experiment,
    run_oracle_check,
    run_sweep,
    train_loop,
)
from .synthdata import (
    AugmentationOp,
    SyntheticDataset,
    augment,
    ground_truth_fn_mask,
    make_gaussian_mixture,
    make_paired_mixture,
)
from .threshold import (
    QuantileSolution,
    ThresholdState,
    lambda_subgradient,
    quantile_objective,
    solve_quantile_exact,
    update_lambda,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationOp",
    "BatchView",
    "BimodalState",
    "BimodalTrainState",
    "EncoderGrads",
    "EncoderParams",
    "FilterResult",
    "FnScores",
    "GlofndEncoder",
    "LossConfig",
    "QuantileSolution",
    "RunConfig",
    "SimilarityBlock",
    "StepMetrics",
    "SurrogateState",
    "SyntheticDataset",
    "ThresholdError",
    "ThresholdState",
    "TowerPair",
    "TrainState",
    "approx_optimal_lambda",
    "backward",
    "batch_similarity",
    "bimodal_filtered_loss",
    "bimodal_step",
    "build_batch_view",
    "build_config",
    "cosine_block",
    "filtered_loss",
    "fn_scores",
    "fnc_filter",
    "forward",
    "g_hat",
    "grad_estimator",
    "ground_truth_fn_mask",
    "init_params",
    "lambda_subgradient",
    "make_gaussian_mixture",
    "make_paired_mixture",
    "normalize_rows",
    "optimal_lambda_full",
    "parse_config_file",
    "predicted_fn_fraction_full",
    "quantile_objective",
    "run_eval",
    "run_experiment",
    "run_oracle_check",
    "run_sweep",
    "solve_quantile_exact",
    "threshold_error",
    "train_loop",
    "train_step",
    "update_lambda",
    "update_u",
]
