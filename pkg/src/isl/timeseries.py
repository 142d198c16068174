"""Temporal extension: condition the generator on a recurrent history state.

A stacked Elman RNN consumes observations (teacher forcing during training)
and its hidden state feeds a generator MLP alongside one noise value, so the
generator models the distribution of the next observation given history.
Training slides fixed-length windows over the series and applies the rank
loss to every (window position, series, dimension) slot; multivariate series
contribute one marginal histogram per dimension, averaged in the loss.

Windows unroll from a zero hidden state: the first input token is the true
previous observation where one exists, a zero token at the series start.
``TemporalTrainConfig.warmup`` optionally teacher-forces real context through
the RNN before the scored positions, so scored states carry deep history
instead of a cold start. Forecasting replays the observed prefix to build
state, then feeds sampled outputs back in.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import autodiff as ad
from . import rng as rng_mod
from .core import (
    IslConfig,
    RankHistogram,
    chi_square_uniformity,
    isl_loss,
    soft_histogram,
    theoretical_loss,
)
from .distributions import NoiseSource
from .nets import (
    Layout,
    MlpSpec,
    ParamVector,
    RnnSpec,
    init_params,
    mlp_forward,
    mlp_layout,
    rnn_layout,
    rnn_step,
    zero_state,
)
from .optim import AdamState, adam_step, clip_global_norm
from .trainer import EpochRecord, KSchedule, RunLog, TrainingDiverged


@dataclass
class SeriesBatch:
    """A collection of (T_i, d) series, optionally with per-series scalers.

    ``scalers[i]`` is a (2, d) array of per-dimension mean and standard
    deviation applied as x -> (x - mean) / std during ingestion.
    """

    sequences: list
    ids: list = None
    scalers: list = None

    def __post_init__(self):
        arrays = [np.asarray(s, dtype=np.float64) for s in self.sequences]
        self.sequences = [a[:, None] if a.ndim == 1 else a for a in arrays]
        if not self.sequences:
            raise ValueError("batch needs at least one series")
        d = self.sequences[0].shape[1]
        for i, s in enumerate(self.sequences):
            if s.ndim != 2:
                raise ValueError(f"series {i} is not 2-d")
            if s.shape[1] != d:
                raise ValueError(f"series {i} has {s.shape[1]} dims, expected {d}")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"series {i} contains non-finite values")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.sequences))]

    @property
    def n_series(self) -> int:
        return len(self.sequences)

    @property
    def d(self) -> int:
        return self.sequences[0].shape[1]

    @property
    def lengths(self) -> list[int]:
        return [s.shape[0] for s in self.sequences]

    @classmethod
    def from_array(cls, arr: np.ndarray, ids=None) -> SeriesBatch:
        """(n, T) or (n, T, d) array to a batch of n series."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError("expected (n, T) or (n, T, d)")
        return cls([arr[i] for i in range(arr.shape[0])], ids=ids)


@dataclass
class TemporalModel:
    """RNN history encoder plus noise-conditioned generator head."""

    rnn: RnnSpec
    generator: MlpSpec
    params: ParamVector

    def __post_init__(self):
        if self.generator.widths[0] != 1 + self.rnn.hidden_width:
            raise ValueError("generator input must be 1 (noise) + rnn hidden width")
        if self.generator.widths[-1] != self.rnn.input_width:
            raise ValueError("generator output width must match the series dimension")
        if self.generator.activations[-1] != "identity":
            raise ValueError("generator output layer must be identity")
        if self.params.layout.size != self.layout().size:
            raise ValueError("parameter vector does not match the model layout")

    @property
    def d(self) -> int:
        return self.rnn.input_width

    def layout(self) -> Layout:
        return Layout(tuple(rnn_layout(self.rnn, "rnn.") + mlp_layout(self.generator, "gen.")))

    @classmethod
    def build(
        cls,
        d: int = 1,
        hidden_width: int = 10,
        rnn_layers: int = 2,
        rnn_activation: str = "relu",
        gen_hidden: tuple[int, ...] = (16, 16),
        gen_activation: str = "relu",
        gen_dropout: tuple[float, ...] = (),
        seed: int = 0,
    ) -> TemporalModel:
        rnn = RnnSpec(d, hidden_width, rnn_layers, rnn_activation)
        widths = (1 + hidden_width,) + tuple(gen_hidden) + (d,)
        acts = (gen_activation,) * len(gen_hidden) + ("identity",)
        gen = MlpSpec(widths, acts, gen_dropout)
        layout = Layout(tuple(rnn_layout(rnn, "rnn.") + mlp_layout(gen, "gen.")))
        params = init_params(layout, rng_mod.stream(seed, "init"))
        return cls(rnn=rnn, generator=gen, params=params)


@dataclass(frozen=True)
class TemporalTrainConfig:
    """Mirrors the static trainer plus the window settings.

    ``isl.batch_size`` counts series per iteration; every window position of
    every sampled series contributes to the histogram, so one update sees
    window * batch_size rank slots per dimension. Diagnostics (and gate
    checks, and the run-log records) happen every ``schedule.test_period``
    iterations on an aggregated-rank subsample of ``gate_points`` (series, t)
    pairs; the subsample keeps the gate's power comparable to the static
    trainer regardless of how many observations the batch holds.

    ``warmup`` teacher-forces up to that many observations through the RNN
    before the scored window, so every scored position sees at least
    ``warmup`` steps of real context instead of a cold hidden state. Window
    offsets are then drawn from the region where full context exists. Without
    it, the first couple of positions in each window are conditioned on a
    truncated history and pull the model toward the unconditional law; with
    it, training states match the context depth a forecast sees after
    replaying its observed prefix.
    """

    isl: IslConfig
    schedule: KSchedule
    epochs: int = 100
    window: int = 20
    learning_rate: float = 1e-3
    seed: int = 0
    clip_norm: float = 10.0
    gate_points: int = 1000
    select_best: bool = True
    select_repeats: int = 4
    warmup: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.isl.k != self.schedule.k_values[0]:
            raise ValueError("isl.k must equal the first schedule stage")
        if self.gate_points < 1:
            raise ValueError("gate_points must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")

    @classmethod
    def standard(
        cls,
        k_max: int = 10,
        epochs: int = 100,
        window: int = 20,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        seed: int = 0,
        alpha: float = 15.0,
        nu: float = 0.5,
        norm_order: int = 2,
        test_period: int = 100,
        significance: float = 0.05,
        warmup: int = 0,
    ) -> TemporalTrainConfig:
        schedule = KSchedule.up_to(k_max, test_period, significance)
        isl = IslConfig(
            k=schedule.k_values[0], alpha=alpha, nu=nu,
            norm_order=norm_order, batch_size=batch_size,
        )
        return cls(isl=isl, schedule=schedule, epochs=epochs, window=window,
                   learning_rate=learning_rate, seed=seed, warmup=warmup)


@dataclass
class TemporalTrainResult:
    model: TemporalModel
    runlog: RunLog
    final_k: int
    iterations: int
    clip_events: int


def _window_loss(
    theta,
    layout: Layout,
    rnn: RnnSpec,
    gen: MlpSpec,
    windows: np.ndarray,
    tokens: np.ndarray,
    z: np.ndarray,
    cfg: IslConfig,
    training: bool = False,
    dropout_rng=None,
    skip: int = 0,
):
    """Rank loss of window batch (M, skip+W, d) with noise block z (W, M, K).

    The first ``skip`` positions are teacher-forced warm-up context: the RNN
    consumes them (with gradients, so the encoder learns from deep history)
    but no rank slots are scored there. Scored slots are ordered
    window-position-major, matching the static trainer's batch order so a
    one-series full-length window reduces to the static loss exactly.
    """
    m, w, d = windows.shape
    k = cfg.k
    pieces = layout.extract(theta)
    h = zero_state(rnn, m)
    x = tokens
    rep_idx = np.repeat(np.arange(m), k)
    counts = []
    for t in range(w):
        h = rnn_step(rnn, pieces, x, h, "rnn.")
        if t >= skip:
            z_col = z[t - skip].reshape(m * k, 1)
            rows = ad.concat([z_col, ad.gather_rows(h[-1], rep_idx)], axis=1)
            out = mlp_forward(gen, pieces, rows, "gen.", training=training, dropout_rng=dropout_rng)
            samples = ad.reshape(out, (m, k, d))
            diff = ad.sub(windows[:, t, :][:, None, :], samples)
            counts.append(ad.sum_(ad.sigmoid(ad.mul(diff, cfg.alpha)), axis=1))
        x = windows[:, t, :]
    all_counts = ad.concat(counts, axis=0)
    loss = None
    for j in range(d):
        q = soft_histogram(ad.narrow(all_counts, 1, j, 1), k, cfg.nu)
        term = isl_loss(q, k, cfg.norm_order)
        loss = term if loss is None else ad.add(loss, term)
    return ad.mul(loss, 1.0 / d)


def temporal_statistics(
    model: TemporalModel,
    series: np.ndarray,
    k: int,
    noise: NoiseSource,
    rng: np.random.Generator,
) -> np.ndarray:
    """Hard rank of each observation against K fresh conditional samples.

    Returns (T, d) integer ranks; aggregated over (t, series) they should be
    uniform on {0..k} when the model matches the data process.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    ranks = _aggregate_ranks(model, series[None, :, :], k, noise, rng)
    return ranks[0]


def _aggregate_ranks(
    model: TemporalModel,
    sequences: np.ndarray,
    k: int,
    noise: NoiseSource,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized hard ranks for (n, T, d) series stacked at equal length."""
    n, t_len, d = sequences.shape
    pieces = model.params.layout.extract(model.params.values)
    h = zero_state(model.rnn, n)
    x = np.zeros((n, d))
    rep_idx = np.repeat(np.arange(n), k)
    ranks = np.empty((n, t_len, d), dtype=np.int64)
    for t in range(t_len):
        h = rnn_step(model.rnn, pieces, x, h, "rnn.")
        z_col = noise.sample(n * k, rng).reshape(-1, 1)
        rows = np.concatenate([z_col, np.asarray(h[-1])[rep_idx]], axis=1)
        samples = np.asarray(mlp_forward(model.generator, pieces, rows, "gen.")).reshape(n, k, d)
        y_t = sequences[:, t, :]
        ranks[:, t, :] = np.sum(samples < y_t[:, None, :], axis=1)
        x = y_t
    return ranks


def _diagnostic_histogram(
    model: TemporalModel,
    data: SeriesBatch,
    k: int,
    noise: NoiseSource,
    rng: np.random.Generator,
    max_points: int,
    repeats: int = 1,
) -> RankHistogram:
    """Aggregated rank histogram over a deterministic series subsample.

    Evaluates a few whole series (ranks need the running history state, so
    contiguous evaluation is the cheap path), then subsamples the pooled
    ranks down to ``max_points`` per repeat so the gate test has the same
    power regardless of series length.
    """
    lengths = data.lengths
    mean_t = max(1, int(np.mean(lengths)))
    n_eval = min(data.n_series, max(2, int(np.ceil(max_points / mean_t))))
    all_ranks = []
    for _ in range(repeats):
        chosen = rng.choice(data.n_series, size=n_eval, replace=False)
        by_len: dict[int, list[int]] = {}
        for idx in chosen:
            by_len.setdefault(lengths[idx], []).append(idx)
        pooled = []
        for t_len, idxs in sorted(by_len.items()):
            stack = np.stack([data.sequences[i] for i in idxs])
            pooled.append(_aggregate_ranks(model, stack, k, noise, rng).ravel())
        ranks = np.concatenate(pooled)
        if ranks.size > max_points:
            ranks = rng.choice(ranks, size=max_points, replace=False)
        all_ranks.append(ranks)
    return RankHistogram.from_ranks(np.concatenate(all_ranks), k)


def train_temporal(
    model: TemporalModel,
    data: SeriesBatch,
    noise: NoiseSource,
    cfg: TemporalTrainConfig,
) -> TemporalTrainResult:
    """Fit the temporal model; returns updated parameters and the run log."""
    if model.d != data.d:
        raise ValueError(f"model dimension {model.d} != data dimension {data.d}")
    if min(data.lengths) < cfg.window:
        raise ValueError("every series must be at least one window long")

    layout = model.params.layout
    train_rng = rng_mod.stream(cfg.seed, "train")
    batch_rng = rng_mod.stream(cfg.seed, "batch")
    gate_rng = rng_mod.stream(cfg.seed, "gate")
    dropout_rng = rng_mod.stream(cfg.seed, "dropout")

    theta = model.params.values.copy()
    adam = AdamState(lr=cfg.learning_rate)
    n = data.n_series
    m_eff = min(cfg.isl.batch_size, n)
    iters_per_epoch = max(1, n // m_eff)
    w = cfg.window

    stage = 0
    isl_cfg = dataclasses.replace(cfg.isl, k=cfg.schedule.k_values[0])
    final_stage = len(cfg.schedule.k_values) - 1
    runlog = RunLog(
        metadata={
            "seed": cfg.seed,
            "batching": "series-shuffle, independent window offsets",
            "init": "uniform-fan-in",
            "k_values": list(cfg.schedule.k_values),
            "test_period": cfg.schedule.test_period,
            "significance": cfg.schedule.significance,
            "window": w,
            "warmup": cfg.warmup,
        }
    )
    clip_events = 0
    total_iters = 0
    next_diag = cfg.schedule.test_period
    losses_since_diag: list[float] = []
    best_theta = None
    best_score = np.inf
    best_epoch = 0

    def run_diagnostics(epoch: int) -> None:
        nonlocal best_theta, best_score, best_epoch, stage, isl_cfg
        current = TemporalModel(model.rnn, model.generator, ParamVector(theta, layout))
        try:
            hist = _diagnostic_histogram(
                current, data, isl_cfg.k, noise, gate_rng, cfg.gate_points
            )
        except ad.NumericError as exc:
            # a step can leave huge-but-finite weights that only overflow on
            # the next forward pass; that is still divergence
            raise TrainingDiverged(
                str(exc), epoch, total_iters, isl_cfg.k, float(np.linalg.norm(theta))
            ) from exc
        report = chi_square_uniformity(hist, cfg.schedule.significance)
        theo = theoretical_loss(hist, isl_cfg.norm_order)
        runlog.records.append(
            EpochRecord(
                epoch=epoch,
                current_k=isl_cfg.k,
                surrogate_loss=float(np.mean(losses_since_diag)),
                theoretical_loss=theo,
                chi_square_statistic=report.statistic,
                accepted=report.accepted,
            )
        )
        losses_since_diag.clear()
        if cfg.select_best and stage == final_stage and theo < best_score * 1.5:
            refined = _diagnostic_histogram(
                current, data, isl_cfg.k, noise, gate_rng, cfg.gate_points,
                repeats=cfg.select_repeats,
            )
            score = theoretical_loss(refined, isl_cfg.norm_order)
            if score < best_score:
                best_score = score
                best_theta = theta.copy()
                best_epoch = epoch
        if report.accepted and stage + 1 < len(cfg.schedule.k_values):
            stage += 1
            isl_cfg = dataclasses.replace(isl_cfg, k=cfg.schedule.k_values[stage])

    for epoch in range(1, cfg.epochs + 1):
        perm = batch_rng.permutation(n)[: iters_per_epoch * m_eff].reshape(
            iters_per_epoch, m_eff
        )
        for it in range(iters_per_epoch):
            idxs = perm[it]
            offsets = np.empty(m_eff, dtype=np.int64)
            for row, i in enumerate(idxs):
                hi = data.sequences[i].shape[0] - w
                lo = min(cfg.warmup, hi)
                offsets[row] = int(batch_rng.integers(lo, hi + 1)) if hi > 0 else 0
            ctx = int(min(cfg.warmup, offsets.min()))
            windows = np.empty((m_eff, ctx + w, data.d))
            tokens = np.zeros((m_eff, data.d))
            for row, i in enumerate(idxs):
                seq = data.sequences[i]
                o = int(offsets[row])
                windows[row] = seq[o - ctx : o + w]
                if o - ctx > 0:
                    tokens[row] = seq[o - ctx - 1]
            z = noise.sample(w * m_eff * isl_cfg.k, train_rng).reshape(w, m_eff, isl_cfg.k)

            def loss_fn(theta_t):
                return _window_loss(
                    theta_t, layout, model.rnn, model.generator,
                    windows, tokens, z, isl_cfg,
                    training=bool(model.generator.dropout), dropout_rng=dropout_rng,
                    skip=ctx,
                )

            try:
                loss, g = ad.value_and_grad(loss_fn, theta)
                g, clipped = clip_global_norm(g, cfg.clip_norm)
                theta = adam_step(adam, theta, g)
            except ad.NumericError as exc:
                raise TrainingDiverged(
                    str(exc), epoch, total_iters, isl_cfg.k, float(np.linalg.norm(theta))
                ) from exc
            clip_events += clipped
            losses_since_diag.append(loss)
            total_iters += 1
            if total_iters >= next_diag:
                period = cfg.schedule.test_period
                next_diag = (total_iters // period + 1) * period
                run_diagnostics(epoch)

    if losses_since_diag:
        run_diagnostics(cfg.epochs)
    if best_theta is not None:
        theta = best_theta
        runlog.metadata["selected_epoch"] = best_epoch
        runlog.metadata["selected_score"] = best_score
    runlog.metadata["clip_events"] = clip_events
    runlog.metadata["iterations"] = total_iters
    runlog.metadata["final_k"] = isl_cfg.k
    return TemporalTrainResult(
        model=TemporalModel(model.rnn, model.generator, ParamVector(theta, layout)),
        runlog=runlog,
        final_k=isl_cfg.k,
        iterations=total_iters,
        clip_events=clip_events,
    )


# ---------------------------------------------------------------------------
# Forecasting


@dataclass
class ForecastResult:
    """Sampled forecast paths and their empirical quantile bands."""

    horizon: int
    trajectories: np.ndarray  # (S, horizon, d)
    quantiles: dict  # level -> (horizon, d)
    history_length: int

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_trajectories": int(self.trajectories.shape[0]),
            "history_length": self.history_length,
            "quantiles": {f"{q:g}": v.tolist() for q, v in self.quantiles.items()},
        }

    def to_csv(self, path) -> None:
        rows = []
        levels = sorted(self.quantiles)
        for t in range(self.horizon):
            for dim in range(self.trajectories.shape[2]):
                row = {"step": t + 1, "dim": dim}
                for q in levels:
                    row[f"q{q:g}"] = self.quantiles[q][t, dim]
                rows.append(row)
        pd.DataFrame(rows).to_csv(path, index=False)


def forecast(
    model: TemporalModel,
    history: np.ndarray,
    horizon: int,
    n_trajectories: int,
    noise: NoiseSource,
    rng: np.random.Generator,
    quantile_levels: tuple[float, ...] = (0.1, 0.5, 0.9),
) -> ForecastResult:
    """Sample forecast paths conditioned on an observed prefix.

    Replays the history through the RNN (teacher forcing), then rolls the
    model forward feeding each trajectory's own samples back as inputs.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 1:
        history = history[:, None]
    if horizon < 1 or n_trajectories < 1:
        raise ValueError("horizon and n_trajectories must be >= 1")
    pieces = model.params.layout.extract(model.params.values)

    h = zero_state(model.rnn, 1)
    x = np.zeros((1, model.d))
    for t in range(history.shape[0]):
        h = rnn_step(model.rnn, pieces, x, h, "rnn.")
        x = history[t : t + 1]

    s = n_trajectories
    h = [np.repeat(np.asarray(layer), s, axis=0) for layer in h]
    x = np.repeat(x, s, axis=0)
    out = np.empty((s, horizon, model.d))
    for step in range(horizon):
        h = rnn_step(model.rnn, pieces, x, h, "rnn.")
        z_col = noise.sample(s, rng).reshape(-1, 1)
        rows = np.concatenate([z_col, np.asarray(h[-1])], axis=1)
        x = np.asarray(mlp_forward(model.generator, pieces, rows, "gen."))
        out[:, step, :] = x
    quantiles = {
        float(q): np.quantile(out, q, axis=0) for q in quantile_levels
    }
    return ForecastResult(
        horizon=horizon,
        trajectories=out,
        quantiles=quantiles,
        history_length=history.shape[0],
    )


# ---------------------------------------------------------------------------
# Synthetic data and CSV ingestion


def ar_generate(
    phi: tuple[float, ...],
    noise_std: float,
    t_len: int,
    n_series: int,
    rng: np.random.Generator,
    init: tuple[float, ...] | None = None,
) -> SeriesBatch:
    """Simulate AR(p) series X_t = sum_i phi_i X_{t-i} + noise_std * xi_t.

    Past values before the start are zero; ``init`` optionally pins the
    first len(init) values of every series instead (no noise inside the
    pinned prefix).
    """
    phi = np.asarray(phi, dtype=np.float64).reshape(-1)
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    p = phi.size
    x = np.zeros((n_series, t_len))
    start = 0
    if init is not None:
        init = np.asarray(init, dtype=np.float64)
        start = min(init.size, t_len)
        x[:, :start] = init[:start]
    xi = rng.standard_normal((n_series, t_len))
    for t in range(start, t_len):
        lo = max(0, t - p)
        past = x[:, lo:t][:, ::-1]
        x[:, t] = past @ phi[: t - lo] + noise_std * xi[:, t]
    return SeriesBatch.from_array(x)


def ar_conditional_mean_path(
    phi: tuple[float, ...], history: np.ndarray, horizon: int
) -> np.ndarray:
    """Noise-free continuation of an AR(p) process from observed history.

    For Gaussian innovations this is the conditional mean and median of
    every forecast step, so it doubles as the exact median path when
    scoring forecast quantiles against the true predictive law.
    """
    phi = np.asarray(phi, dtype=np.float64)
    p = phi.size
    buf = list(np.asarray(history, dtype=np.float64).reshape(-1)[-p:])
    out = np.empty(horizon)
    for t in range(horizon):
        past = buf[-p:][::-1]
        out[t] = float(np.dot(phi[: len(past)], past))
        buf.append(out[t])
    return out


def ar_forecast_std_path(
    phi: tuple[float, ...], noise_std: float, horizon: int
) -> np.ndarray:
    """Conditional forecast standard deviation at horizons 1..horizon.

    Var(X_{t+h} | history) = noise_std^2 * sum_{j<h} psi_j^2 where psi are
    the moving-average weights psi_0 = 1, psi_j = sum_i phi_i psi_{j-i}.
    Combined with ``ar_conditional_mean_path`` this gives any conditional
    quantile of the Gaussian predictive law in closed form.
    """
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.zeros(horizon)
    psi[0] = 1.0
    for j in range(1, horizon):
        lo = max(0, j - phi.size)
        past = psi[lo:j][::-1]
        psi[j] = float(np.dot(phi[: j - lo], past))
    return noise_std * np.sqrt(np.cumsum(psi**2))


@dataclass(frozen=True)
class CsvLayout:
    """How to read series out of a CSV.

    Wide (default): every value column is one univariate series, rows are
    time steps. Long: rows are grouped by ``series_column`` into one series
    each, and the value columns are that series' dimensions. An optional
    ``time_column`` sorts rows (and is excluded from values).
    """

    time_column: str | None = None
    series_column: str | None = None
    value_columns: tuple[str, ...] | None = None
    standardize: bool = True


@dataclass(frozen=True)
class IngestReport:
    n_series: int
    lengths: tuple[int, ...]
    d: int
    dropped_rows: int
    standardized: bool


def ingest_csv(path, layout: CsvLayout = CsvLayout()) -> tuple[SeriesBatch, IngestReport]:
    """Load series from a CSV, dropping non-finite rows (counted in the
    report) and optionally standardizing each series per dimension."""
    df = pd.read_csv(path)
    if layout.time_column is not None:
        if layout.time_column not in df.columns:
            raise ValueError(f"time column '{layout.time_column}' not in CSV")
        df = df.sort_values(layout.time_column, kind="stable")
    reserved = {layout.time_column, layout.series_column} - {None}
    if layout.value_columns is not None:
        missing = [c for c in layout.value_columns if c not in df.columns]
        if missing:
            raise ValueError(f"value columns not in CSV: {missing}")
        value_cols = list(layout.value_columns)
    else:
        value_cols = [
            c for c in df.columns
            if c not in reserved and np.issubdtype(df[c].dtype, np.number)
        ]
    if not value_cols:
        raise ValueError("no numeric value columns found")

    groups: list[tuple[str, pd.DataFrame]]
    if layout.series_column is not None:
        if layout.series_column not in df.columns:
            raise ValueError(f"series column '{layout.series_column}' not in CSV")
        groups = [(str(key), g) for key, g in df.groupby(layout.series_column, sort=True)]
        per_series_cols = [value_cols] * len(groups)
    else:
        groups = [(c, df) for c in value_cols]
        per_series_cols = [[c] for c in value_cols]

    sequences, ids, scalers = [], [], []
    dropped = 0
    for (name, g), cols in zip(groups, per_series_cols):
        vals = g[cols].to_numpy(dtype=np.float64)
        keep = np.all(np.isfinite(vals), axis=1)
        dropped += int(np.sum(~keep))
        vals = vals[keep]
        if vals.shape[0] < 2:
            raise ValueError(f"series '{name}' has fewer than 2 finite rows")
        if layout.standardize:
            mean = vals.mean(axis=0)
            std = vals.std(axis=0)
            std = np.where(std < 1e-12, 1.0, std)
            vals = (vals - mean) / std
            scalers.append(np.stack([mean, std]))
        sequences.append(vals)
        ids.append(name)
    batch = SeriesBatch(
        sequences, ids=ids, scalers=scalers if layout.standardize else None
    )
    report = IngestReport(
        n_series=batch.n_series,
        lengths=tuple(batch.lengths),
        d=batch.d,
        dropped_rows=dropped,
        standardized=layout.standardize,
    )
    return batch, report


def save_series_csv(batch: SeriesBatch, path) -> None:
    """Write a univariate batch in wide format (one column per series)."""
    if batch.d != 1:
        raise ValueError("wide CSV export only supports univariate series")
    if len(set(batch.lengths)) != 1:
        raise ValueError("wide CSV export needs equal-length series")
    data = {"t": np.arange(batch.lengths[0])}
    for name, seq in zip(batch.ids, batch.sequences):
        data[f"series_{name}"] = seq[:, 0]
    pd.DataFrame(data).to_csv(path, index=False)
