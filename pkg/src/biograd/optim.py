"""Plain SGD and Adam for the backprop baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sgd_step(W, g, lr: float):
    return (W - lr * g).astype(W.dtype)


@dataclass
class AdamState:
    """Moment buffers of one parameter matrix; created lazily on the first step."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(W, g, state: AdamState, lr: float):
    """One bias-corrected Adam update. Returns ``(W', state)``; ``state`` is updated in place."""
    g = np.asarray(g, dtype=np.float64)
    if state.m is None:
        state.m = np.zeros(W.shape)
        state.v = np.zeros(W.shape)
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * g
    state.v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    step = lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return (W - step).astype(W.dtype), state
