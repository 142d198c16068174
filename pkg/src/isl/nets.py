"""Dense and recurrent nets over a single flat parameter vector.

Parameters live in one float64 vector addressed through a `Layout` of named
pieces (weight matrices and biases). Forward passes accept either the flat
vector as an autodiff `Tensor` (training) or a plain numpy array (sampling),
because the underlying ops dispatch on input type. Keeping everything in one
vector makes the optimizer, gradient clipping, and checkpoints trivial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

ACTIVATIONS = {
    "elu": ad.elu,
    "relu": ad.relu,
    "tanh": ad.tanh,
    "identity": ad.identity,
}


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected stack: widths include input and output sizes.

    ``activations`` has one entry per dense layer. ``dropout`` (optional,
    same length) gives per-layer drop probabilities applied after the
    activation during training only, with inverted scaling so evaluation
    needs no correction.
    """

    widths: tuple[int, ...]
    activations: tuple[str, ...]
    dropout: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.widths) < 2 or any(w <= 0 for w in self.widths):
            raise ValueError("widths must be >= 2 positive integers")
        if len(self.activations) != len(self.widths) - 1:
            raise ValueError("need one activation per dense layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation '{a}'")
        if self.dropout:
            if len(self.dropout) != len(self.widths) - 1:
                raise ValueError("need one dropout rate per dense layer")
            if any(not 0.0 <= r < 1.0 for r in self.dropout):
                raise ValueError("dropout rates must lie in [0, 1)")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]


@dataclass(frozen=True)
class RnnSpec:
    """Stacked Elman recurrence: h_l = act(x_l Wx + h_l_prev Wh + b)."""

    input_width: int
    hidden_width: int
    layers: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.input_width <= 0 or self.hidden_width <= 0 or self.layers <= 0:
            raise ValueError("rnn dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation '{self.activation}'")


def mlp_layout(spec: MlpSpec, prefix: str = "") -> list[tuple[str, tuple[int, ...]]]:
    entries = []
    for i in range(spec.n_layers):
        entries.append((f"{prefix}W{i}", (spec.widths[i], spec.widths[i + 1])))
        entries.append((f"{prefix}b{i}", (spec.widths[i + 1],)))
    return entries


def rnn_layout(spec: RnnSpec, prefix: str = "") -> list[tuple[str, tuple[int, ...]]]:
    entries = []
    for l in range(spec.layers):
        in_w = spec.input_width if l == 0 else spec.hidden_width
        entries.append((f"{prefix}L{l}.Wx", (in_w, spec.hidden_width)))
        entries.append((f"{prefix}L{l}.Wh", (spec.hidden_width, spec.hidden_width)))
        entries.append((f"{prefix}L{l}.b", (spec.hidden_width,)))
    return entries


@dataclass
class Layout:
    """Names, shapes, and flat offsets of each parameter piece."""

    entries: tuple[tuple[str, tuple[int, ...]], ...]
    index: dict = field(init=False, repr=False)
    size: int = field(init=False)

    def __post_init__(self):
        self.entries = tuple((name, tuple(shape)) for name, shape in self.entries)
        names = [n for n, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in layout")
        self.index = {}
        offset = 0
        for name, shape in self.entries:
            length = int(np.prod(shape))
            self.index[name] = (offset, length, shape)
            offset += length
        self.size = offset

    def piece(self, theta, name: str):
        """Slice one named piece out of the flat vector, reshaped."""
        offset, length, shape = self.index[name]
        return ad.reshape(ad.narrow(theta, 0, offset, length), shape)

    def extract(self, theta) -> dict:
        """All pieces at once; hoist this out of inner loops."""
        return {name: self.piece(theta, name) for name, _ in self.entries}


@dataclass
class ParamVector:
    """Flat parameter values plus the layout that names them."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.layout.size,):
            raise ValueError(
                f"value vector has size {self.values.size}, layout needs {self.layout.size}"
            )

    def view(self, name: str) -> np.ndarray:
        offset, length, shape = self.layout.index[name]
        return self.values[offset : offset + length].reshape(shape)

    def copy(self) -> ParamVector:
        return ParamVector(self.values.copy(), self.layout)

    def to_json(self) -> dict:
        return {
            "layout": [[name, list(shape)] for name, shape in self.layout.entries],
            "values": self.values.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> ParamVector:
        layout = Layout(tuple((n, tuple(s)) for n, s in obj["layout"]))
        return cls(np.asarray(obj["values"], dtype=np.float64), layout)


def init_params(layout: Layout, rng: np.random.Generator) -> ParamVector:
    """Uniform fan-in initialization.

    Each weight matrix (fan_in, fan_out) draws from U[-sqrt(1/fan_in),
    sqrt(1/fan_in)]; a bias uses the fan-in of the weight entry preceding it.
    Draw order follows the layout, so initialization is reproducible.
    """
    values = np.empty(layout.size, dtype=np.float64)
    fan_in = 1
    for name, shape in layout.entries:
        offset, length, _ = layout.index[name]
        if len(shape) == 2:
            fan_in = shape[0]
        bound = np.sqrt(1.0 / fan_in)
        values[offset : offset + length] = rng.uniform(-bound, bound, size=length)
    return ParamVector(values, layout)


def mlp_forward(
    spec: MlpSpec,
    params: dict,
    x,
    prefix: str = "",
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
):
    """Apply the stack to a (n, in_width) batch.

    ``params`` maps piece names to Tensors or arrays (see Layout.extract).
    """
    h = x
    for i in range(spec.n_layers):
        h = ad.add(ad.matmul(h, params[f"{prefix}W{i}"]), params[f"{prefix}b{i}"])
        h = ACTIVATIONS[spec.activations[i]](h)
        if training and spec.dropout and spec.dropout[i] > 0.0:
            if dropout_rng is None:
                raise ValueError("dropout during training needs a generator")
            rate = spec.dropout[i]
            mask = (dropout_rng.random(ad._val(h).shape) >= rate) / (1.0 - rate)
            h = ad.mul(h, mask)
    return h


def rnn_step(spec: RnnSpec, params: dict, x, h_layers: list, prefix: str = "") -> list:
    """One recurrence step. ``h_layers`` holds one (n, hidden) state per layer."""
    act = ACTIVATIONS[spec.activation]
    new_h = []
    inp = x
    for l in range(spec.layers):
        pre = ad.add(
            ad.add(
                ad.matmul(inp, params[f"{prefix}L{l}.Wx"]),
                ad.matmul(h_layers[l], params[f"{prefix}L{l}.Wh"]),
            ),
            params[f"{prefix}L{l}.b"],
        )
        hl = act(pre)
        new_h.append(hl)
        inp = hl
    return new_h


def zero_state(spec: RnnSpec, n: int) -> list[np.ndarray]:
    return [np.zeros((n, spec.hidden_width)) for _ in range(spec.layers)]


# ---------------------------------------------------------------------------
# Checkpoints


def spec_to_json(spec) -> dict:
    if isinstance(spec, MlpSpec):
        return {
            "type": "mlp",
            "widths": list(spec.widths),
            "activations": list(spec.activations),
            "dropout": list(spec.dropout),
        }
    if isinstance(spec, RnnSpec):
        return {
            "type": "rnn",
            "input_width": spec.input_width,
            "hidden_width": spec.hidden_width,
            "layers": spec.layers,
            "activation": spec.activation,
        }
    raise TypeError(f"not a network spec: {spec!r}")


def spec_from_json(obj: dict):
    if obj["type"] == "mlp":
        return MlpSpec(
            tuple(obj["widths"]),
            tuple(obj["activations"]),
            tuple(obj.get("dropout", ())),
        )
    if obj["type"] == "rnn":
        return RnnSpec(
            obj["input_width"], obj["hidden_width"], obj["layers"], obj["activation"]
        )
    raise ValueError(f"unknown spec type '{obj.get('type')}'")


def save_checkpoint(path, kind: str, specs: dict, params: ParamVector, meta: dict | None = None):
    """Write a JSON checkpoint. Content is deterministic for fixed inputs."""
    obj = {
        "format": "isl-checkpoint",
        "version": 1,
        "kind": kind,
        "specs": {name: spec_to_json(s) for name, s in specs.items()},
        "params": params.to_json(),
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[str, dict, ParamVector, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format") != "isl-checkpoint":
        raise ValueError(f"{path} is not an isl checkpoint")
    specs = {name: spec_from_json(s) for name, s in obj["specs"].items()}
    params = ParamVector.from_json(obj["params"])
    return obj["kind"], specs, params, obj.get("meta", {})
