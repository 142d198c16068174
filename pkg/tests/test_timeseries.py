"""Temporal pipeline: batches, AR oracles, training, forecasting, ingestion."""

import dataclasses

import numpy as np
import pytest
from scipy.special import ndtri

from isl import autodiff as ad
from isl.core import IslConfig, RankHistogram, chi_square_uniformity, surrogate_loss
from isl.distributions import NoiseSource
from isl.nets import Layout, MlpSpec, ParamVector, RnnSpec, mlp_layout, rnn_layout
from isl.rng import stream
from isl.timeseries import (
    CsvLayout,
    SeriesBatch,
    TemporalModel,
    TemporalTrainConfig,
    ar_conditional_mean_path,
    ar_forecast_std_path,
    ar_generate,
    forecast,
    ingest_csv,
    save_series_csv,
    temporal_statistics,
    train_temporal,
)
from isl.timeseries import _diagnostic_histogram, _window_loss


# ---------------------------------------------------------------------------
# Helpers


def matched_ar2_model(phi1: float, phi2: float, sigma: float) -> TemporalModel:
    """Hand-built exact conditional sampler for a zero-prehistory AR(2).

    The single-layer ReLU state carries (y+, y-, prev y+, prev y-) and an
    identity head reads sigma * z + phi1 * y + phi2 * prev_y, so the model's
    conditional law given any history is exactly N(phi . recent, sigma^2).
    """
    rnn = RnnSpec(input_width=1, hidden_width=4, layers=1, activation="relu")
    gen = MlpSpec((5, 1), ("identity",))
    layout = Layout(tuple(rnn_layout(rnn, "rnn.") + mlp_layout(gen, "gen.")))
    values = np.zeros(layout.size)
    pv = ParamVector(values, layout)
    pv.view("rnn.L0.Wx")[:] = [[1.0, -1.0, 0.0, 0.0]]
    wh = pv.view("rnn.L0.Wh")
    wh[0, 2] = 1.0
    wh[1, 3] = 1.0
    pv.view("gen.W0")[:] = np.array([[sigma], [phi1], [-phi1], [phi2], [-phi2]])
    return TemporalModel(rnn=rnn, generator=gen, params=pv)


# ---------------------------------------------------------------------------
# SeriesBatch


def test_series_batch_promotes_1d_and_validates():
    b = SeriesBatch([np.arange(5.0), np.arange(7.0)])
    assert b.d == 1
    assert b.lengths == [5, 7]
    assert b.sequences[0].shape == (5, 1)
    assert b.ids == ["0", "1"]
    with pytest.raises(ValueError):
        SeriesBatch([])
    with pytest.raises(ValueError):
        SeriesBatch([np.zeros((4, 1)), np.zeros((4, 2))])
    with pytest.raises(ValueError):
        SeriesBatch([np.array([1.0, np.nan])])


def test_series_batch_from_array():
    b = SeriesBatch.from_array(np.zeros((3, 10)))
    assert b.n_series == 3 and b.d == 1
    b2 = SeriesBatch.from_array(np.zeros((2, 10, 4)))
    assert b2.d == 4
    with pytest.raises(ValueError):
        SeriesBatch.from_array(np.zeros(10))


# ---------------------------------------------------------------------------
# TemporalModel


def test_temporal_model_build_shapes():
    m = TemporalModel.build(d=2, hidden_width=6, rnn_layers=2, gen_hidden=(8,))
    assert m.d == 2
    assert m.generator.widths == (7, 8, 2)
    assert m.params.layout.size == m.layout().size


def test_temporal_model_validates_wiring():
    rnn = RnnSpec(1, 4, 1, "relu")
    bad_gen = MlpSpec((3, 1), ("identity",))  # input != 1 + hidden
    layout = Layout(tuple(rnn_layout(rnn, "rnn.") + mlp_layout(bad_gen, "gen.")))
    pv = ParamVector(np.zeros(layout.size), layout)
    with pytest.raises(ValueError):
        TemporalModel(rnn=rnn, generator=bad_gen, params=pv)
    tanh_out = MlpSpec((5, 1), ("tanh",))
    layout2 = Layout(tuple(rnn_layout(rnn, "rnn.") + mlp_layout(tanh_out, "gen.")))
    with pytest.raises(ValueError):
        TemporalModel(rnn=rnn, generator=tanh_out,
                      params=ParamVector(np.zeros(layout2.size), layout2))


# ---------------------------------------------------------------------------
# AR simulation and closed-form forecast paths


def test_ar_generate_white_noise_with_empty_phi():
    b = ar_generate((), 2.0, 500, 4, stream(1, "data"))
    x = np.stack(b.sequences)[:, :, 0]
    assert abs(x.mean()) < 0.2
    assert abs(x.std() - 2.0) < 0.1


def test_ar_generate_matches_manual_recursion():
    rng = stream(2, "data")
    b = ar_generate((0.5, 0.2), 0.1, 6, 1, rng)
    x = b.sequences[0][:, 0]
    xi = stream(2, "data").standard_normal((1, 6))[0]
    manual = np.zeros(6)
    for t in range(6):
        prev1 = manual[t - 1] if t >= 1 else 0.0
        prev2 = manual[t - 2] if t >= 2 else 0.0
        manual[t] = 0.5 * prev1 + 0.2 * prev2 + 0.1 * xi[t]
    assert np.allclose(x, manual, atol=1e-12)


def test_ar_generate_init_pins_prefix():
    b = ar_generate((0.9,), 0.5, 10, 3, stream(3, "data"), init=(1.0, 2.0))
    x = np.stack(b.sequences)[:, :, 0]
    assert np.all(x[:, 0] == 1.0)
    assert np.all(x[:, 1] == 2.0)
    assert np.std(x[:, 2]) > 0  # noise resumes after the pinned prefix


def test_ar_generate_yule_walker_autocorrelation():
    # AR(2) with phi = (0.5, 0.2): rho_1 = phi1 / (1 - phi2) = 0.625
    b = ar_generate((0.5, 0.2), 0.1, 2000, 50, stream(4, "data"))
    x = np.stack(b.sequences)[:, 200:, 0]  # drop transient
    xc = x - x.mean()
    rho1 = np.mean(xc[:, 1:] * xc[:, :-1]) / np.mean(xc * xc)
    assert rho1 == pytest.approx(0.625, abs=0.02)


def test_ar_conditional_mean_path_hand_recursion():
    path = ar_conditional_mean_path((0.5, 0.2), np.array([1.0, 2.0]), 3)
    # y_{T+1} = .5*2 + .2*1 = 1.2 ; y_{T+2} = .5*1.2 + .2*2 = 1.0 ;
    # y_{T+3} = .5*1.0 + .2*1.2 = 0.74
    assert np.allclose(path, [1.2, 1.0, 0.74], atol=1e-12)


def test_ar_forecast_std_path_ar1_closed_form():
    # AR(1): psi_j = phi^j, so var_h = sigma^2 * sum_{j<h} phi^{2j}
    phi, sigma = 0.7, 0.3
    path = ar_forecast_std_path((phi,), sigma, 4)
    expect = sigma * np.sqrt(np.cumsum(phi ** (2 * np.arange(4))))
    assert np.allclose(path, expect, atol=1e-12)


def test_ar_forecast_std_path_ar2_psi_weights():
    # psi_0 = 1, psi_1 = phi1, psi_2 = phi1^2 + phi2
    phi1, phi2, sigma = 0.5, 0.2, 0.1
    path = ar_forecast_std_path((phi1, phi2), sigma, 3)
    psi = np.array([1.0, phi1, phi1**2 + phi2])
    assert np.allclose(path, sigma * np.sqrt(np.cumsum(psi**2)), atol=1e-12)


# ---------------------------------------------------------------------------
# Rank statistics against the exact sampler


def test_matched_student_ranks_are_uniform():
    phi, sigma = (0.5, 0.2), 0.1
    model = matched_ar2_model(*phi, sigma)
    data = ar_generate(phi, sigma, 1000, 10, stream(5, "data"))
    noise = NoiseSource("standard_normal", seed=0)
    rng = stream(6, "gate")
    ranks = np.concatenate(
        [temporal_statistics(model, s, 10, noise, rng).ravel() for s in data.sequences]
    )
    hist = RankHistogram.from_ranks(ranks, 10)
    rep = chi_square_uniformity(hist, significance=0.01)
    assert hist.total == 10_000
    assert rep.accepted, f"chi2={rep.statistic:.1f}"


def test_mismatched_student_ranks_are_rejected():
    model = matched_ar2_model(0.8, -0.2, 0.1)  # wrong dynamics
    data = ar_generate((0.5, 0.2), 0.1, 1000, 10, stream(5, "data"))
    noise = NoiseSource("standard_normal", seed=0)
    rng = stream(6, "gate")
    ranks = np.concatenate(
        [temporal_statistics(model, s, 10, noise, rng).ravel() for s in data.sequences]
    )
    rep = chi_square_uniformity(RankHistogram.from_ranks(ranks, 10), significance=0.01)
    assert not rep.accepted


def test_diagnostic_histogram_subsamples_to_max_points():
    model = matched_ar2_model(0.5, 0.2, 0.1)
    data = ar_generate((0.5, 0.2), 0.1, 400, 8, stream(7, "data"))
    noise = NoiseSource("standard_normal", seed=0)
    h = _diagnostic_histogram(model, data, 5, noise, stream(8, "gate"), max_points=300)
    assert h.total == 300
    h2 = _diagnostic_histogram(model, data, 5, noise, stream(8, "gate"),
                               max_points=300, repeats=3)
    assert h2.total == 900


# ---------------------------------------------------------------------------
# Window loss reduction to the static surrogate


def test_single_series_window_loss_reduces_to_static_loss():
    # With the generator blind to the hidden state, ranking one series over
    # a full-length window is exactly the static batch computation.
    rng = stream(9, "init")
    t_len, k = 24, 4
    model = TemporalModel.build(d=1, hidden_width=3, rnn_layers=1, gen_hidden=(6,), seed=3)
    pv = model.params
    pv.view("gen.W0")[1:, :] = 0.0  # rows 1.. read h; zero them out
    y = stream(10, "data").normal(0.0, 1.0, t_len)
    z = stream(11, "noise-source").standard_normal(t_len * k)
    cfg = IslConfig(k=k, batch_size=1)

    windows = y.reshape(1, t_len, 1)
    tokens = np.zeros((1, 1))
    z_block = z.reshape(t_len, 1, k)
    temporal = float(np.asarray(
        _window_loss(pv.values, pv.layout, model.rnn, model.generator,
                     windows, tokens, z_block, cfg)
    ))

    pieces = pv.layout.extract(pv.values)
    from isl.nets import mlp_forward

    rows = np.concatenate([z.reshape(-1, 1), np.zeros((t_len * k, 3))], axis=1)
    samples = np.asarray(mlp_forward(model.generator, pieces, rows, "gen.")).reshape(t_len, k)
    static = float(np.asarray(surrogate_loss(y, samples, cfg)))
    assert temporal == pytest.approx(static, abs=1e-12)


def test_window_loss_multivariate_averages_identical_dims():
    # A generator with identical weights for both output columns produces
    # identical per-dimension histograms, so the averaged loss equals the
    # loss of either dimension alone.
    rnn = RnnSpec(2, 3, 1, "relu")
    gen = MlpSpec((4, 2), ("identity",))
    layout = Layout(tuple(rnn_layout(rnn, "rnn.") + mlp_layout(gen, "gen.")))
    pv = ParamVector(stream(12, "init").normal(0, 0.3, layout.size), layout)
    w0 = pv.view("gen.W0")
    w0[:, 1] = w0[:, 0]
    pv.view("gen.b0")[1] = pv.view("gen.b0")[0]
    wx = pv.view("rnn.L0.Wx")
    wx[1, :] = wx[0, :]  # state also symmetric in the two input dims
    model = TemporalModel(rnn=rnn, generator=gen, params=pv)

    m, w, k = 3, 5, 3
    base = stream(13, "data").normal(0, 1, (m, w))
    windows = np.repeat(base[:, :, None], 2, axis=2)
    tokens = np.zeros((m, 2))
    z = stream(14, "noise-source").standard_normal((w, m, k))
    cfg = IslConfig(k=k, batch_size=m)
    loss2d = float(np.asarray(
        _window_loss(pv.values, layout, rnn, gen, windows, tokens, z, cfg)))

    # slice the same computation down to one dimension by rebuilding a d=1
    # model with the first column only
    rnn1 = RnnSpec(1, 3, 1, "relu")
    gen1 = MlpSpec((4, 1), ("identity",))
    layout1 = Layout(tuple(rnn_layout(rnn1, "rnn.") + mlp_layout(gen1, "gen.")))
    pv1 = ParamVector(np.zeros(layout1.size), layout1)
    pv1.view("rnn.L0.Wx")[:] = wx[0:1, :] * 2.0  # both dims fed equal inputs
    pv1.view("rnn.L0.Wh")[:] = pv.view("rnn.L0.Wh")
    pv1.view("rnn.L0.b")[:] = pv.view("rnn.L0.b")
    pv1.view("gen.W0")[:] = w0[:, 0:1]
    pv1.view("gen.b0")[:] = pv.view("gen.b0")[0:1]
    loss1d = float(np.asarray(
        _window_loss(pv1.values, layout1, rnn1, gen1, base[:, :, None], np.zeros((m, 1)),
                     z, cfg)))
    assert loss2d == pytest.approx(loss1d, abs=1e-12)


def test_window_loss_skip_scores_only_trailing_positions():
    # With the generator blind to the hidden state, warm-up context cannot
    # change the scored outputs, so skip=c over a context-extended window must
    # equal skip=0 over just the scored slice (same noise block).
    model = TemporalModel.build(d=1, hidden_width=3, rnn_layers=1, gen_hidden=(6,), seed=5)
    pv = model.params
    pv.view("gen.W0")[1:, :] = 0.0
    ctx, w, k = 7, 5, 4
    y = stream(15, "data").normal(0.0, 1.0, (1, ctx + w, 1))
    z = stream(16, "noise-source").standard_normal((w, 1, k))
    cfg = IslConfig(k=k, batch_size=1)
    with_ctx = float(np.asarray(
        _window_loss(pv.values, pv.layout, model.rnn, model.generator,
                     y, np.zeros((1, 1)), z, cfg, skip=ctx)))
    scored_only = float(np.asarray(
        _window_loss(pv.values, pv.layout, model.rnn, model.generator,
                     y[:, ctx:, :], y[:, ctx - 1, :], z, cfg)))
    assert with_ctx == pytest.approx(scored_only, abs=1e-12)


# ---------------------------------------------------------------------------
# Training loop behavior


def _tiny_training_setup(seed=0, n_series=8, t_len=60):
    data = ar_generate((0.5,), 1.0, t_len, n_series, stream(seed, "data"))
    model = TemporalModel.build(d=1, hidden_width=4, rnn_layers=1, gen_hidden=(6,), seed=seed)
    noise = NoiseSource("standard_normal", seed=seed)
    return model, data, noise


def test_train_temporal_smoke_and_determinism():
    model, data, noise = _tiny_training_setup()
    cfg = TemporalTrainConfig.standard(k_max=3, epochs=40, window=10, batch_size=8,
                                       learning_rate=1e-3, seed=0)
    a = train_temporal(model, data, noise, cfg)
    b = train_temporal(model, data, noise, cfg)
    assert np.array_equal(a.model.params.values, b.model.params.values)
    assert a.iterations == 40
    assert np.isfinite([r.surrogate_loss for r in a.runlog.records]).all()
    a.runlog.validate()


def test_train_temporal_diagnostic_cadence():
    model, data, noise = _tiny_training_setup()
    cfg = TemporalTrainConfig.standard(k_max=2, epochs=250, window=10, batch_size=8,
                                       learning_rate=1e-3, seed=0)
    res = train_temporal(model, data, noise, cfg)
    # 1 iteration per epoch: diagnostics at 100, 200, and a final flush at 250
    assert res.iterations == 250
    assert len(res.runlog.records) == 3
    assert [r.epoch for r in res.runlog.records] == [100, 200, 250]


def test_train_temporal_validates_inputs():
    model, data, noise = _tiny_training_setup()
    cfg = TemporalTrainConfig.standard(epochs=2, window=100)
    with pytest.raises(ValueError):
        train_temporal(model, data, noise, cfg)  # window longer than series
    model2 = TemporalModel.build(d=2, seed=0)
    cfg2 = TemporalTrainConfig.standard(epochs=2, window=10)
    with pytest.raises(ValueError):
        train_temporal(model2, data, noise, cfg2)  # dimension mismatch
    with pytest.raises(ValueError):
        TemporalTrainConfig.standard(epochs=2, window=10, warmup=-1)


def test_train_temporal_warmup_runs_and_is_deterministic():
    model, data, noise = _tiny_training_setup()
    cfg = TemporalTrainConfig.standard(k_max=3, epochs=40, window=10, batch_size=8,
                                       learning_rate=1e-3, seed=0, warmup=15)
    a = train_temporal(model, data, noise, cfg)
    b = train_temporal(model, data, noise, cfg)
    assert np.array_equal(a.model.params.values, b.model.params.values)
    assert np.isfinite([r.surrogate_loss for r in a.runlog.records]).all()
    assert a.runlog.metadata["warmup"] == 15
    # warm-up context changes which states are scored, hence the fit
    plain = train_temporal(model, data, noise, dataclasses.replace(cfg, warmup=0))
    assert not np.array_equal(a.model.params.values, plain.model.params.values)


# ---------------------------------------------------------------------------
# Forecasting


def test_forecast_matches_analytic_conditional_law():
    phi, sigma = (0.5, 0.2), 0.1
    model = matched_ar2_model(*phi, sigma)
    noise = NoiseSource("standard_normal", seed=0)
    history = ar_generate(phi, sigma, 40, 1, stream(15, "data")).sequences[0]
    fr = forecast(model, history, horizon=3, n_trajectories=40_000, noise=noise,
                  rng=stream(16, "metrics"), quantile_levels=(0.1, 0.5, 0.9))
    mean_path = ar_conditional_mean_path(phi, history[:, 0], 3)
    std_path = ar_forecast_std_path(phi, sigma, 3)
    for i, q in enumerate((0.1, 0.5, 0.9)):
        expect = mean_path + ndtri(q) * std_path
        got = fr.quantiles[q][:, 0]
        # MC tolerance at 40k paths
        assert np.allclose(got, expect, atol=4e-3), (q, got, expect)


def test_forecast_is_deterministic_given_rng():
    model, data, noise = _tiny_training_setup()
    a = forecast(model, data.sequences[0], 4, 100, noise, stream(17, "metrics"))
    b = forecast(model, data.sequences[0], 4, 100, noise, stream(17, "metrics"))
    assert np.array_equal(a.trajectories, b.trajectories)
    assert a.history_length == 60


def test_forecast_validates_arguments():
    model, data, noise = _tiny_training_setup()
    with pytest.raises(ValueError):
        forecast(model, data.sequences[0], 0, 10, noise, stream(18, "metrics"))
    with pytest.raises(ValueError):
        forecast(model, data.sequences[0], 3, 0, noise, stream(18, "metrics"))


def test_forecast_result_serialization(tmp_path):
    model, data, noise = _tiny_training_setup()
    fr = forecast(model, data.sequences[0], 3, 50, noise, stream(19, "metrics"))
    obj = fr.to_json()
    assert obj["horizon"] == 3
    assert obj["n_trajectories"] == 50
    assert set(obj["quantiles"]) == {"0.1", "0.5", "0.9"}
    path = tmp_path / "fc.csv"
    fr.to_csv(path)
    import pandas as pd

    df = pd.read_csv(path)
    assert list(df.columns) == ["step", "dim", "q0.1", "q0.5", "q0.9"]
    assert len(df) == 3


# ---------------------------------------------------------------------------
# CSV ingestion


def test_ingest_wide_csv(tmp_path):
    path = tmp_path / "wide.csv"
    path.write_text("t,a,b\n0,1.0,5.0\n1,2.0,6.0\n2,3.0,7.0\n")
    batch, report = ingest_csv(path, CsvLayout(time_column="t", standardize=False))
    assert report.n_series == 2
    assert report.d == 1
    assert batch.ids == ["a", "b"]
    assert np.allclose(batch.sequences[0][:, 0], [1, 2, 3])
    assert report.dropped_rows == 0
    assert not report.standardized


def test_ingest_long_csv_multivariate(tmp_path):
    path = tmp_path / "long.csv"
    rows = ["series,t,x,y"]
    for sid in ("s1", "s2"):
        for t in range(4):
            rows.append(f"{sid},{t},{t + 0.5},{2 * t}")
    path.write_text("\n".join(rows) + "\n")
    layout = CsvLayout(time_column="t", series_column="series",
                       value_columns=("x", "y"), standardize=False)
    batch, report = ingest_csv(path, layout)
    assert report.n_series == 2
    assert report.d == 2
    assert np.allclose(batch.sequences[0][:, 1], [0, 2, 4, 6])


def test_ingest_sorts_by_time_column(tmp_path):
    path = tmp_path / "shuffled.csv"
    path.write_text("t,a\n2,3.0\n0,1.0\n1,2.0\n")
    batch, _ = ingest_csv(path, CsvLayout(time_column="t", standardize=False))
    assert np.allclose(batch.sequences[0][:, 0], [1, 2, 3])


def test_ingest_drops_and_counts_bad_rows(tmp_path):
    path = tmp_path / "gaps.csv"
    path.write_text("a\n1.0\nnan\n2.0\nnan\n3.0\n")
    batch, report = ingest_csv(path, CsvLayout(standardize=False))
    assert report.dropped_rows == 2
    assert np.allclose(batch.sequences[0][:, 0], [1, 2, 3])


def test_ingest_standardizes_with_recoverable_scalers(tmp_path):
    path = tmp_path / "scale.csv"
    vals = np.array([10.0, 12.0, 14.0, 16.0])
    path.write_text("a\n" + "\n".join(str(v) for v in vals) + "\n")
    batch, report = ingest_csv(path, CsvLayout(standardize=True))
    assert report.standardized
    s = batch.sequences[0][:, 0]
    assert s.mean() == pytest.approx(0.0, abs=1e-12)
    assert s.std() == pytest.approx(1.0, abs=1e-12)
    mean, std = batch.scalers[0][0, 0], batch.scalers[0][1, 0]
    assert np.allclose(s * std + mean, vals, atol=1e-12)


def test_ingest_constant_series_keeps_unit_scale(tmp_path):
    path = tmp_path / "const.csv"
    path.write_text("a\n5.0\n5.0\n5.0\n")
    batch, _ = ingest_csv(path, CsvLayout(standardize=True))
    assert batch.scalers[0][1, 0] == 1.0  # std clamped, no division blow-up
    assert np.allclose(batch.sequences[0][:, 0], 0.0)


def test_ingest_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a\n1.0\n2.0\n")
    with pytest.raises(ValueError):
        ingest_csv(path, CsvLayout(time_column="missing"))
    with pytest.raises(ValueError):
        ingest_csv(path, CsvLayout(value_columns=("zz",)))
    short = tmp_path / "short.csv"
    short.write_text("a\n1.0\nnan\n")
    with pytest.raises(ValueError):
        ingest_csv(short, CsvLayout())


def test_save_series_csv_round_trip(tmp_path):
    data = ar_generate((0.5,), 1.0, 30, 3, stream(20, "data"))
    path = tmp_path / "out.csv"
    save_series_csv(data, path)
    batch, report = ingest_csv(path, CsvLayout(time_column="t", standardize=False))
    assert report.n_series == 3
    for a, b in zip(batch.sequences, data.sequences):
        assert np.allclose(a, b, atol=1e-12)
    with pytest.raises(ValueError):
        save_series_csv(SeriesBatch([np.zeros((5, 2))]), tmp_path / "x.csv")
