"""Network layouts, initialization, forward passes, checkpoints."""

import numpy as np
import pytest

from isl import autodiff as ad
from isl.nets import (
    Layout,
    MlpSpec,
    ParamVector,
    RnnSpec,
    init_params,
    load_checkpoint,
    mlp_forward,
    mlp_layout,
    rnn_layout,
    rnn_step,
    save_checkpoint,
    spec_from_json,
    spec_to_json,
    zero_state,
)
from isl.rng import stream


def test_mlp_layout_names_and_sizes():
    spec = MlpSpec((1, 13, 7, 1), ("elu", "elu", "identity"))
    layout = Layout(tuple(mlp_layout(spec)))
    names = [n for n, _ in layout.entries]
    assert names == ["W0", "b0", "W1", "b1", "W2", "b2"]
    assert layout.size == (1 * 13 + 13) + (13 * 7 + 7) + (7 * 1 + 1)


def test_rnn_layout_stacks_layers():
    spec = RnnSpec(input_width=1, hidden_width=10, layers=2, activation="relu")
    layout = Layout(tuple(rnn_layout(spec, "rnn.")))
    names = [n for n, _ in layout.entries]
    assert names[:3] == ["rnn.L0.Wx", "rnn.L0.Wh", "rnn.L0.b"]
    assert layout.index["rnn.L1.Wx"][2] == (10, 10)  # layer 1 input is hidden


def test_layout_rejects_duplicate_names():
    with pytest.raises(ValueError):
        Layout((("W0", (2, 2)), ("W0", (2,))))


def test_piece_extraction_round_trip():
    spec = MlpSpec((2, 3, 1), ("tanh", "identity"))
    layout = Layout(tuple(mlp_layout(spec)))
    theta = np.arange(layout.size, dtype=np.float64)
    pieces = layout.extract(theta)
    # re-flattening the pieces in layout order recovers theta
    flat = np.concatenate([np.asarray(pieces[n]).reshape(-1) for n, _ in layout.entries])
    assert np.array_equal(flat, theta)
    assert pieces["W0"].shape == (2, 3)


def test_init_bounds_follow_fan_in():
    spec = MlpSpec((100, 4, 1), ("elu", "identity"))
    layout = Layout(tuple(mlp_layout(spec)))
    pv = init_params(layout, stream(0, "init"))
    w0 = pv.view("W0")
    b0 = pv.view("b0")
    bound0 = np.sqrt(1.0 / 100)
    assert np.all(np.abs(w0) <= bound0)
    assert np.all(np.abs(b0) <= bound0)
    w1 = pv.view("W1")
    assert np.all(np.abs(w1) <= np.sqrt(1.0 / 4))
    # wide fan-in draws should actually fill the range
    assert np.max(np.abs(w0)) > 0.8 * bound0


def test_init_is_reproducible():
    spec = MlpSpec((3, 5, 2), ("relu", "identity"))
    layout = Layout(tuple(mlp_layout(spec)))
    a = init_params(layout, stream(7, "init"))
    b = init_params(layout, stream(7, "init"))
    assert np.array_equal(a.values, b.values)


def test_param_vector_validates_size():
    layout = Layout((("W0", (2, 2)),))
    with pytest.raises(ValueError):
        ParamVector(np.zeros(5), layout)


def test_mlp_forward_matches_manual_numpy():
    spec = MlpSpec((2, 3, 1), ("tanh", "identity"))
    layout = Layout(tuple(mlp_layout(spec)))
    pv = init_params(layout, stream(1, "init"))
    x = stream(2, "data").normal(size=(6, 2))
    out = mlp_forward(spec, layout.extract(pv.values), x)
    h = np.tanh(x @ pv.view("W0") + pv.view("b0"))
    manual = h @ pv.view("W1") + pv.view("b1")
    assert np.allclose(ad._val(out), manual, atol=1e-14)


def test_mlp_forward_tensor_and_array_agree():
    spec = MlpSpec((1, 4, 1), ("elu", "identity"))
    layout = Layout(tuple(mlp_layout(spec)))
    pv = init_params(layout, stream(3, "init"))
    x = np.linspace(-2, 2, 9).reshape(-1, 1)
    plain = mlp_forward(spec, layout.extract(pv.values), x)
    tensored = mlp_forward(spec, layout.extract(ad.Tensor(pv.values)), x)
    assert isinstance(tensored, ad.Tensor)
    assert np.allclose(np.asarray(plain), tensored.data, atol=1e-14)


def test_dropout_masks_and_rescales():
    spec = MlpSpec((1, 200, 1), ("relu", "identity"), dropout=(0.5, 0.0))
    layout = Layout(tuple(mlp_layout(spec)))
    pv = init_params(layout, stream(4, "init"))
    x = np.ones((1, 1))
    # training passes differ across dropout draws and from evaluation
    a = np.asarray(mlp_forward(spec, layout.extract(pv.values), x,
                               training=True, dropout_rng=stream(5, "dropout")))
    b = np.asarray(mlp_forward(spec, layout.extract(pv.values), x,
                               training=True, dropout_rng=stream(6, "dropout")))
    evald = np.asarray(mlp_forward(spec, layout.extract(pv.values), x))
    assert not np.allclose(a, b)
    assert not np.allclose(a, evald)
    # evaluation never needs a generator and applies no mask
    with pytest.raises(ValueError):
        mlp_forward(spec, layout.extract(pv.values), x, training=True)


def test_rnn_step_matches_manual_recursion():
    spec = RnnSpec(input_width=1, hidden_width=3, layers=2, activation="tanh")
    layout = Layout(tuple(rnn_layout(spec)))
    pv = init_params(layout, stream(8, "init"))
    pieces = layout.extract(pv.values)
    x = np.array([[0.7], [-0.2]])
    h = zero_state(spec, 2)
    new = rnn_step(spec, pieces, x, h)
    h0 = np.tanh(x @ pv.view("L0.Wx") + np.zeros((2, 3)) @ pv.view("L0.Wh") + pv.view("L0.b"))
    h1 = np.tanh(h0 @ pv.view("L1.Wx") + np.zeros((2, 3)) @ pv.view("L1.Wh") + pv.view("L1.b"))
    assert np.allclose(np.asarray(new[0]), h0, atol=1e-14)
    assert np.allclose(np.asarray(new[1]), h1, atol=1e-14)
    assert len(new) == 2


def test_spec_json_round_trip():
    m = MlpSpec((1, 13, 7, 1), ("elu", "elu", "identity"), dropout=(0.1, 0.1, 0.0))
    r = RnnSpec(2, 10, layers=2, activation="relu")
    assert spec_from_json(spec_to_json(m)) == m
    assert spec_from_json(spec_to_json(r)) == r
    with pytest.raises(ValueError):
        spec_from_json({"type": "conv"})


def test_checkpoint_round_trip(tmp_path):
    spec = MlpSpec((1, 5, 1), ("elu", "identity"))
    layout = Layout(tuple(mlp_layout(spec)))
    pv = init_params(layout, stream(9, "init"))
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, "generator-1d", {"generator": spec}, pv, meta={"k": 10})
    kind, specs, params, meta = load_checkpoint(path)
    assert kind == "generator-1d"
    assert specs["generator"] == spec
    assert np.array_equal(params.values, pv.values)
    assert params.layout.entries == pv.layout.entries
    assert meta == {"k": 10}


def test_checkpoint_rejects_foreign_json(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"hello": 1}')
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((1,), ())
    with pytest.raises(ValueError):
        MlpSpec((1, 2), ("elu", "elu"))
    with pytest.raises(ValueError):
        MlpSpec((1, 2), ("swish",))
    with pytest.raises(ValueError):
        MlpSpec((1, 2), ("elu",), dropout=(1.0,))
    with pytest.raises(ValueError):
        RnnSpec(0, 5)
    with pytest.raises(ValueError):
        RnnSpec(1, 5, activation="swish")
