"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: every op returns a `Tensor` node holding the forward value and
a vector-Jacobian closure back to its `Tensor` parents. Plain numpy arrays
(and Python scalars) are treated as constants, and an op applied only to
constants returns a plain numpy result, so the same forward code serves both
training (gradients needed) and sampling/evaluation (no graph wanted).

All values are float64. Every op checks its output for NaN/inf and raises
`NumericError` naming the op, so numerical blow-ups surface at the source
instead of corrupting a later update.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class NumericError(RuntimeError):
    """A forward computation produced a non-finite value."""


def _require_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by op '{op}'")


def _val(x) -> np.ndarray:
    """Forward value of a Tensor or constant, as a float64 array."""
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A node in the reverse-mode graph.

    Leaves are built directly from arrays; interior nodes are produced by the
    ops in this module. `grad` is populated by `backward()` on the scalar
    output node.
    """

    __slots__ = ("data", "grad", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, leaf={self._vjp is None})"

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into `.grad` of every reachable node."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = self._toposort()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(node.grad)):
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += pg

    def _toposort(self) -> list[Tensor]:
        # Iterative post-order: parents precede children in the result.
        order: list[Tensor] = []
        state: dict[int, int] = {}
        stack = [self]
        while stack:
            node = stack[-1]
            s = state.get(id(node))
            if s is None:
                state[id(node)] = 0
                for p in node._parents:
                    if id(p) not in state:
                        stack.append(p)
            elif s == 0:
                state[id(node)] = 1
                order.append(node)
                stack.pop()
            else:
                stack.pop()
        return order

    # Arithmetic sugar; constants on either side stay constants.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape of the input it belongs to."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _node(data, parents, vjps, op):
    """Build an op output: a Tensor if any input was one, else plain numpy."""
    _require_finite(data, op)
    tensor_parents = tuple(p for p in parents if isinstance(p, Tensor))
    if not tensor_parents:
        return data
    live = tuple(fn for p, fn in zip(parents, vjps) if isinstance(p, Tensor))

    def vjp(g):
        return tuple(fn(g) for fn in live)

    return Tensor(data, tensor_parents, vjp)


# ---------------------------------------------------------------------------
# Binary ops


def add(a, b):
    ad, bd = _val(a), _val(b)
    data = ad + bd
    return _node(
        data,
        (a, b),
        (lambda g: _unbroadcast(g, ad.shape), lambda g: _unbroadcast(g, bd.shape)),
        "add",
    )


def sub(a, b):
    ad, bd = _val(a), _val(b)
    data = ad - bd
    return _node(
        data,
        (a, b),
        (lambda g: _unbroadcast(g, ad.shape), lambda g: _unbroadcast(-g, bd.shape)),
        "sub",
    )


def mul(a, b):
    ad, bd = _val(a), _val(b)
    data = ad * bd
    return _node(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(g * bd, ad.shape),
            lambda g: _unbroadcast(g * ad, bd.shape),
        ),
        "mul",
    )


def div(a, b):
    ad, bd = _val(a), _val(b)
    data = ad / bd
    return _node(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(g / bd, ad.shape),
            lambda g: _unbroadcast(-g * ad / (bd * bd), bd.shape),
        ),
        "div",
    )


def matmul(a, b):
    ad, bd = _val(a), _val(b)
    if ad.ndim != 2 or bd.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    data = ad @ bd
    return _node(
        data,
        (a, b),
        (lambda g: g @ bd.T, lambda g: ad.T @ g),
        "matmul",
    )


# ---------------------------------------------------------------------------
# Elementwise ops


def power(x, p: float):
    xd = _val(x)
    data = xd**p
    return _node(data, (x,), (lambda g: g * p * xd ** (p - 1.0),), "pow")


def exp(x):
    data = np.exp(_val(x))
    return _node(data, (x,), (lambda g: g * data,), "exp")


def tanh(x):
    data = np.tanh(_val(x))
    return _node(data, (x,), (lambda g: g * (1.0 - data * data),), "tanh")


def sigmoid(x):
    data = expit(_val(x))
    return _node(data, (x,), (lambda g: g * data * (1.0 - data),), "sigmoid")


def relu(x):
    xd = _val(x)
    data = np.maximum(xd, 0.0)
    return _node(data, (x,), (lambda g: g * (xd > 0.0),), "relu")


def elu(x):
    xd = _val(x)
    # expm1 on the clipped argument avoids overflow warnings on the unused
    # positive branch of the where().
    neg = np.expm1(np.minimum(xd, 0.0))
    data = np.where(xd > 0.0, xd, neg)
    return _node(data, (x,), (lambda g: g * np.where(xd > 0.0, 1.0, neg + 1.0),), "elu")


def identity(x):
    return x


def absval(x):
    xd = _val(x)
    data = np.abs(xd)
    return _node(data, (x,), (lambda g: g * np.sign(xd),), "abs")


# ---------------------------------------------------------------------------
# Reductions and shape ops


def sum_(x, axis=None):
    xd = _val(x)
    data = np.sum(xd, axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, xd.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), xd.shape).copy()

    return _node(data, (x,), (vjp,), "sum")


def mean(x, axis=None):
    xd = _val(x)
    n = xd.size if axis is None else xd.shape[axis]
    return mul(sum_(x, axis=axis), 1.0 / n)


def reshape(x, shape):
    xd = _val(x)
    data = xd.reshape(shape)
    return _node(data, (x,), (lambda g: g.reshape(xd.shape),), "reshape")


def concat(parts, axis=0):
    datas = [_val(p) for p in parts]
    data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def make_vjp(i):
        sl = [slice(None)] * data.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return _node(data, tuple(parts), tuple(make_vjp(i) for i in range(len(parts))), "concat")


def gather_rows(x, idx):
    """Select rows of a 2-d (or 1-d) array; duplicated rows accumulate grads."""
    xd = _val(x)
    idx = np.asarray(idx, dtype=np.intp)
    data = xd[idx]

    def vjp(g):
        out = np.zeros_like(xd)
        np.add.at(out, idx, g)
        return out

    return _node(data, (x,), (vjp,), "gather_rows")


def narrow(x, axis: int, start: int, length: int):
    """Contiguous slice along one axis."""
    xd = _val(x)
    sl = [slice(None)] * xd.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    data = xd[sl]

    def vjp(g):
        out = np.zeros_like(xd)
        out[sl] = g
        return out

    return _node(data, (x,), (vjp,), "narrow")


# ---------------------------------------------------------------------------
# Gradient entry points


def value_and_grad(loss_fn, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Evaluate a scalar loss of a flat parameter vector and its gradient."""
    leaf = Tensor(theta)
    out = loss_fn(leaf)
    if not isinstance(out, Tensor):
        raise TypeError("loss_fn must return a Tensor depending on theta")
    out.backward()
    g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    return out.item(), g


def grad(loss_fn, theta: np.ndarray) -> np.ndarray:
    return value_and_grad(loss_fn, theta)[1]


@dataclass
class GradCheckReport:
    """Finite-difference comparison of reverse-mode gradients."""

    n_checked: int
    max_rel_err: float
    passed: bool
    failures: list = field(default_factory=list)


def check_gradients(
    loss_fn,
    theta: np.ndarray,
    n_probes: int = 25,
    tol: float = 1e-4,
    step: float = 1e-5,
    rng: np.random.Generator | None = None,
    min_grad: float = 1e-6,
) -> GradCheckReport:
    """Probe random coordinates with central differences.

    Components with |analytic gradient| <= `min_grad` are skipped: the
    relative criterion is meaningless at zero crossings and the surrounding
    coordinates cover the op nonetheless.
    """
    theta = np.asarray(theta, dtype=np.float64)
    _, analytic = value_and_grad(loss_fn, theta)
    n = theta.size
    if n_probes >= n:
        coords = np.arange(n)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        coords = rng.choice(n, size=n_probes, replace=False)

    max_rel = 0.0
    failures = []
    checked = 0
    for i in coords:
        if abs(analytic[i]) <= min_grad:
            continue
        checked += 1
        e = np.zeros(n)
        e[i] = step
        f_plus = _val(loss_fn(Tensor(theta + e)))
        f_minus = _val(loss_fn(Tensor(theta - e)))
        fd = float(f_plus - f_minus) / (2.0 * step)
        rel = abs(fd - analytic[i]) / max(abs(fd), abs(analytic[i]))
        max_rel = max(max_rel, rel)
        if rel > tol:
            failures.append((int(i), float(analytic[i]), fd, rel))
    return GradCheckReport(
        n_checked=checked,
        max_rel_err=max_rel,
        passed=not failures,
        failures=failures,
    )
