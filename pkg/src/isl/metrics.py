"""Evaluation metrics: distribution fit for 1-d generators, error against
the optimal noise-to-target transport, and probabilistic forecast scores."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .distributions import NoiseSource, TargetDistribution, optimal_transform


@dataclass(frozen=True)
class MetricConfig:
    n_monte_carlo: int = 100_000
    seed: int = 0
    transform_policy: str = "best_of_two"

    def __post_init__(self):
        if self.n_monte_carlo < 1000:
            raise ValueError("n_monte_carlo must be >= 1000")
        if self.transform_policy not in ("best_of_two", "increasing", "decreasing"):
            raise ValueError(f"unknown transform policy '{self.transform_policy}'")


def ksd(model_samples: np.ndarray, target: TargetDistribution) -> float:
    """Kolmogorov-Smirnov distance between the target cdf and the empirical
    cdf of model samples, evaluated on both sides of every jump."""
    s = np.sort(np.asarray(model_samples, dtype=np.float64))
    n = s.size
    if n == 0:
        raise ValueError("need at least one sample")
    f = np.asarray(target.cdf(s))
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(f - upper)), np.max(np.abs(f - lower))))


@dataclass(frozen=True)
class TransformErrorReport:
    """Monte Carlo L1/L2 error between the generator and the optimal
    transport map from noise to target, over the noise law."""

    mae: float
    mse: float
    branch: str  # which monotone branch won: "increasing" or "decreasing"


def transform_error(
    gen_fn,
    target: TargetDistribution,
    noise: NoiseSource,
    cfg: MetricConfig = MetricConfig(),
) -> TransformErrorReport:
    """Compare ``gen_fn`` (maps a noise vector to samples) with the optimal
    transform on shared noise draws.

    A generator may learn either monotone transport (increasing or
    decreasing); under ``best_of_two`` both are scored by MAE and the better
    branch is reported.
    """
    rng = rng_mod.stream(cfg.seed, "metrics")
    z = noise.sample(cfg.n_monte_carlo, rng)
    g = np.asarray(gen_fn(z), dtype=np.float64).reshape(-1)
    if g.shape != z.shape:
        raise ValueError("gen_fn must return one sample per noise value")
    branches = {
        "increasing": optimal_transform(target, noise, z, reflected=False),
        "decreasing": optimal_transform(target, noise, z, reflected=True),
    }
    if cfg.transform_policy == "best_of_two":
        candidates = branches.items()
    else:
        candidates = [(cfg.transform_policy, branches[cfg.transform_policy])]
    best = None
    for name, f in candidates:
        err = g - f
        mae = float(np.mean(np.abs(err)))
        mse = float(np.mean(err * err))
        if best is None or mae < best.mae:
            best = TransformErrorReport(mae=mae, mse=mse, branch=name)
    return best


@dataclass(frozen=True)
class ForecastScore:
    """Aggregate forecast errors over a horizon (summed before normalizing,
    matching how probabilistic-forecast benchmarks aggregate).

    nd: sum |median - actual| / sum |actual|
    rmse: root mean squared error of the median path
    ql: 2 * sum pinball_rho / sum |actual|, per requested rho
    """

    nd: float
    rmse: float
    ql: dict = field(default_factory=dict)


def forecast_metrics(
    trajectories: np.ndarray,
    actual: np.ndarray,
    rho_levels: tuple[float, ...] = (0.5, 0.9),
) -> ForecastScore:
    """Score sampled forecast trajectories (S, tau, d) against actuals
    (tau, d). At rho = 0.5 the quantile loss equals ND by identity."""
    trajectories = np.asarray(trajectories, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if trajectories.ndim == 2:
        trajectories = trajectories[:, :, None]
    if actual.ndim == 1:
        actual = actual[:, None]
    if trajectories.shape[1:] != actual.shape:
        raise ValueError(
            f"trajectory steps/dims {trajectories.shape[1:]} do not match "
            f"actuals {actual.shape}"
        )
    denom = float(np.sum(np.abs(actual)))
    if denom == 0.0:
        raise ValueError("actuals are identically zero; normalized scores undefined")
    median = np.quantile(trajectories, 0.5, axis=0)
    nd = float(np.sum(np.abs(median - actual)) / denom)
    rmse = float(np.sqrt(np.mean((median - actual) ** 2)))
    ql = {}
    for rho in rho_levels:
        if not 0.0 < rho < 1.0:
            raise ValueError("quantile levels must lie in (0, 1)")
        pred = np.quantile(trajectories, rho, axis=0)
        pinball = rho * np.maximum(actual - pred, 0.0) + (1.0 - rho) * np.maximum(
            pred - actual, 0.0
        )
        ql[rho] = float(2.0 * np.sum(pinball) / denom)
    return ForecastScore(nd=nd, rmse=rmse, ql=ql)
