"""Two-compartment neuron primitives.

All functions work on a leading batch axis: voltages and spikes are
``(N, n)`` arrays, weights are ``(n_out, n_in)``. A single sample is just
``N == 1`` (1-D inputs are accepted too).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ERROR_MODES = ("bernoulli", "exact")


@dataclass(frozen=True)
class NeuronHyper:
    d_v: float = 0.6      # somatic voltage decay
    v_th: float = 0.3     # spike threshold
    a: float = 0.3        # half-width of the rectangular pseudo-gradient
    b: float = 1.0        # pseudo-gradient amplitude
    T: int = 20           # presentation steps per sample
    t_error: int = 5      # first step (0-based) at which errors reach the apical side

    @classmethod
    def for_dataset(cls, dataset: str) -> "NeuronHyper":
        if dataset == "mnist":
            return cls()
        if dataset == "nmnist":
            return cls(d_v=0.3, T=60, t_error=19)
        raise ConfigError(f"unknown dataset {dataset!r}")

    @property
    def window(self) -> int:
        """Number of steps that carry error feedback."""
        return self.T - self.t_error


def _check_matmul(W, x, what):
    if W.shape[1] != x.shape[-1]:
        raise ValueError(
            f"{what}: weight shape {W.shape} does not accept input of width {x.shape[-1]}"
        )


def lif_step(v, o, W, o_pre, hyper: NeuronHyper):
    """Advance somatic voltages by one step.

    ``v`` and ``o`` are the previous voltage and spikes. The stored voltage is
    never zeroed on a spike; the reset acts through ``(1 - o)`` at the next
    call. Returns the new (voltage, spikes).
    """
    _check_matmul(W, o_pre, "lif_step")
    if v.shape[-1] != W.shape[0]:
        raise ValueError(f"lif_step: voltage width {v.shape[-1]} vs {W.shape[0]} rows")
    v_new = hyper.d_v * v * (1.0 - o) + o_pre @ W.T
    return v_new, (v_new > hyper.v_th).astype(v_new.dtype)


def pseudo_grad(v, hyper: NeuronHyper):
    """Rectangular surrogate of d(spike)/d(voltage)."""
    return np.where(np.abs(np.asarray(v) - hyper.v_th) < hyper.a, hyper.b, 0.0)


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def accumulate_output_and_error(output, o_out, labels):
    """Add output spikes to the running counts and return (counts, error).

    The error is softmax(counts) minus the one-hot label, i.e. the
    cross-entropy gradient with respect to the counts.
    """
    output = output + o_out
    n_k = output.shape[-1]
    labels = np.asarray(labels)
    if np.any((labels < 0) | (labels >= n_k)):
        raise ValueError(f"label outside [0, {n_k})")
    e = softmax(output)
    e[..., :] -= np.eye(n_k)[labels]
    return output, e


def encode_error_spikes(e, t: int, hyper: NeuronHyper, mode: str = "bernoulli", rng=None):
    """Turn the signed error into positive/negative error-neuron spikes.

    In ``bernoulli`` mode neuron j of the positive (negative) population fires
    with probability ``min(|e_j|, 1)`` when ``e_j`` is positive (negative).
    ``rng`` is a Generator or an array of uniforms shaped like ``e``. In
    ``exact`` mode no spikes are emitted; the apical side takes ``e`` directly.
    """
    if mode not in ERROR_MODES:
        raise ConfigError(f"unknown error mode {mode!r}; expected one of {ERROR_MODES}")
    zeros = np.zeros_like(e)
    if mode == "exact" or t < hyper.t_error:
        return zeros, zeros.copy()
    u = rng.random(e.shape) if isinstance(rng, np.random.Generator) else np.asarray(rng)
    pos = ((e > 0) & (u < e)).astype(e.dtype)
    neg = ((e < 0) & (u < -e)).astype(e.dtype)
    return pos, neg


def apical_step(v_a, B, o_pos, o_neg, mode: str = "bernoulli", e=None):
    """Integrate feedback into the (non-leaky, non-spiking) apical voltage."""
    if mode == "exact":
        _check_matmul(B, e, "apical_step")
        return v_a + e @ B.T
    if mode not in ERROR_MODES:
        raise ConfigError(f"unknown error mode {mode!r}")
    _check_matmul(B, o_pos, "apical_step")
    return v_a + (o_pos - o_neg) @ B.T
