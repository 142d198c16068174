"""Rank-statistic training for implicit generative models.

A generator g(z) matches a data distribution exactly when the rank of a
data point among K generator samples is uniform on {0..K}. This package
turns that invariance into a differentiable training loss (soft rank
counts smoothed into a histogram, compared against the uniform pmf), plus
the supporting pieces: analytic target distributions, a small reverse-mode
autodiff engine with MLP/RNN layers, a progressive-K trainer, a temporal
extension for probabilistic forecasting, theory oracles, and evaluation
metrics. The ``isl`` command-line tool drives end-to-end experiments.
"""

from . import autodiff
from .core import (
    ChiSquareReport,
    IslConfig,
    MomentCheck,
    RankHistogram,
    SoftHistogram,
    chi_square_uniformity,
    isl_loss,
    moment_uniformity_check,
    rank_statistic,
    rank_statistics,
    soft_count,
    soft_counts,
    soft_histogram,
    surrogate_loss,
    theoretical_loss,
)
from .distributions import (
    Cauchy,
    Mixture,
    NoiseSource,
    Normal,
    Pareto,
    TargetDistribution,
    Uniform,
    optimal_transform,
    parse_noise,
    parse_target,
)
from .metrics import (
    ForecastScore,
    MetricConfig,
    TransformErrorReport,
    forecast_metrics,
    ksd,
    transform_error,
)
from .nets import (
    Layout,
    MlpSpec,
    ParamVector,
    RnnSpec,
    init_params,
    load_checkpoint,
    mlp_forward,
    rnn_step,
    save_checkpoint,
)
from .optim import AdamState, adam_step, clip_global_norm
from .rng import stream
from .theory import MismatchBoundReport, l1_distance, mismatch_bound_report, rank_pmf
from .timeseries import (
    CsvLayout,
    ForecastResult,
    SeriesBatch,
    TemporalModel,
    TemporalTrainConfig,
    TemporalTrainResult,
    ar_conditional_mean_path,
    ar_forecast_std_path,
    ar_generate,
    forecast,
    ingest_csv,
    save_series_csv,
    temporal_statistics,
    train_temporal,
)
from .trainer import (
    EpochRecord,
    KSchedule,
    RunLog,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    default_k_values,
    evaluate_generator,
    model_rank_histogram,
    train_1d,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Cauchy",
    "ChiSquareReport",
    "CsvLayout",
    "EpochRecord",
    "ForecastResult",
    "ForecastScore",
    "IslConfig",
    "KSchedule",
    "Layout",
    "MetricConfig",
    "MismatchBoundReport",
    "Mixture",
    "MlpSpec",
    "MomentCheck",
    "NoiseSource",
    "Normal",
    "ParamVector",
    "Pareto",
    "RankHistogram",
    "RnnSpec",
    "RunLog",
    "SeriesBatch",
    "SoftHistogram",
    "TargetDistribution",
    "TemporalModel",
    "TemporalTrainConfig",
    "TemporalTrainResult",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "TransformErrorReport",
    "Uniform",
    "adam_step",
    "ar_conditional_mean_path",
    "ar_forecast_std_path",
    "ar_generate",
    "autodiff",
    "chi_square_uniformity",
    "clip_global_norm",
    "default_k_values",
    "evaluate_generator",
    "forecast",
    "forecast_metrics",
    "ingest_csv",
    "init_params",
    "isl_loss",
    "ksd",
    "l1_distance",
    "load_checkpoint",
    "mismatch_bound_report",
    "mlp_forward",
    "model_rank_histogram",
    "moment_uniformity_check",
    "optimal_transform",
    "parse_noise",
    "parse_target",
    "rank_pmf",
    "rank_statistic",
    "rank_statistics",
    "rnn_step",
    "save_checkpoint",
    "save_series_csv",
    "soft_count",
    "soft_counts",
    "soft_histogram",
    "stream",
    "surrogate_loss",
    "temporal_statistics",
    "theoretical_loss",
    "train_1d",
    "train_temporal",
    "transform_error",
]
