"""Adam optimizer over flat parameter vectors, with global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericError


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")


def clip_global_norm(g: np.ndarray, max_norm: float) -> tuple[np.ndarray, bool]:
    """Scale the gradient down to `max_norm` if it exceeds it."""
    norm = float(np.linalg.norm(g))
    if max_norm > 0 and norm > max_norm:
        return g * (max_norm / norm), True
    return g, False


def adam_step(state: AdamState, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Apply one bias-corrected Adam update, mutating `state` and returning
    the new parameter vector."""
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient passed to adam_step")
    if state.m is None:
        state.m = np.zeros_like(theta)
        state.v = np.zeros_like(theta)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
