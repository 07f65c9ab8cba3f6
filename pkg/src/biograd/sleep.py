"""Sleep phase: unsupervised mirroring of feedback weights.

A hidden layer is driven with zero-mean random +/- spikes, the response is
propagated to the output and back through the error neurons, and the
feedback matrix of that layer is nudged by an Oja-like Hebbian rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .network import NetworkParams
from .neuron import NeuronHyper, apical_step, lif_step
from .quant import PrecisionSpec, quantize


@dataclass(frozen=True)
class SleepHyper:
    beta: float = 1e-4 / 3     # feedback learning rate
    T_sleep: int = 50          # steps of random drive per cycle
    p_spike: float = 0.25      # probability of a + (and of a -) spike per unit and step
    batch: int = 128           # independent random drives averaged per update
    every: int = 1             # sleep after every `every` batches, `every` cycles each

    def __post_init__(self):
        if not 0 <= self.p_spike <= 0.5:
            raise ConfigError(f"p_spike must lie in [0, 0.5], got {self.p_spike}")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if self.every < 1 or self.T_sleep < 1 or self.batch < 1:
            raise ConfigError("sleep schedule, duration and batch must be positive")


@dataclass
class SleepTraces:
    tr_hid: np.ndarray  # (N, n_i) net random spikes emitted by the layer
    tr_err: np.ndarray  # (N, n_K) error-neuron spikes seen by its apical side


def gen_random_spikes(shape, p_spike: float, rng: np.random.Generator):
    """Each unit emits +, - or nothing with probabilities p, p, 1-2p."""
    if p_spike > 0.5 or p_spike < 0:
        raise ConfigError(f"p_spike must lie in [0, 0.5], got {p_spike}")
    u = rng.random(shape)
    pos = (u < p_spike).astype(np.float64)
    neg = ((u >= p_spike) & (u < 2 * p_spike)).astype(np.float64)
    return pos, neg


def sleep_propagate(params: NetworkParams, layer: int, hyper: NeuronHyper,
                    sleep: SleepHyper, rng: np.random.Generator,
                    n: int | None = None) -> SleepTraces:
    """Run one random-drive presentation for hidden layer ``layer`` (0-based).

    Layer ``layer`` emits random +/- spikes; downstream layers follow their
    usual LIF dynamics; output spikes drive the positive error neurons whose
    spikes arrive at the apical side of ``layer``.
    """
    K = params.K
    if not 0 <= layer < K - 1:
        raise ValueError(f"sleep layer {layer} is not a hidden layer of a {K}-layer net")
    n = sleep.batch if n is None else n
    dims = params.dims
    W = [w.astype(np.float64, copy=False) for w in params.W]
    B_i = params.B[layer].astype(np.float64, copy=False)
    v = {j: np.zeros((n, dims[j + 1])) for j in range(layer + 1, K)}
    o = {j: np.zeros((n, dims[j + 1])) for j in range(layer + 1, K)}
    v_a = np.zeros((n, dims[layer + 1]))
    tr_hid = np.zeros((n, dims[layer + 1]))
    tr_err = np.zeros((n, dims[-1]))
    for _ in range(sleep.T_sleep):
        pos, neg = gen_random_spikes((n, dims[layer + 1]), sleep.p_spike, rng)
        x = pos - neg
        tr_hid += x
        for j in range(layer + 1, K):
            v[j], o[j] = lif_step(v[j], o[j], W[j], x, hyper)
            x = o[j]
        o_e = o[K - 1]
        tr_err += o_e
        v_a = apical_step(v_a, B_i, o_e, np.zeros_like(o_e))
    return SleepTraces(tr_hid, tr_err)


def feedback_delta(tr_hid, tr_err, B, beta: float):
    """``dB[j, k] = beta * err_k * (hid_j - err_k * B[j, k])``.

    With batched traces ``(N, n)`` the per-sample changes are averaged.
    """
    tr_hid = np.atleast_2d(np.asarray(tr_hid, dtype=np.float64))
    tr_err = np.atleast_2d(np.asarray(tr_err, dtype=np.float64))
    if B.shape != (tr_hid.shape[1], tr_err.shape[1]) or len(tr_hid) != len(tr_err):
        raise ValueError(
            f"B {B.shape} does not match traces {tr_hid.shape} and {tr_err.shape}"
        )
    n = len(tr_hid)
    hebb = tr_hid.T @ tr_err / n
    forget = (tr_err ** 2).mean(axis=0)[None, :] * B
    return beta * (hebb - forget)


def run_sleep_phase(params: NetworkParams, n_cycles: int, hyper: NeuronHyper,
                    sleep: SleepHyper, rng: np.random.Generator,
                    precision: PrecisionSpec | None = None) -> NetworkParams:
    """Run ``n_cycles`` cycles; each updates every hidden feedback matrix once, in order.

    Feedforward weights are left untouched. ``params`` is modified in place
    and returned.
    """
    for _ in range(n_cycles):
        for i in range(params.K - 1):
            tr = sleep_propagate(params, i, hyper, sleep, rng)
            B = params.B[i]
            new = B.astype(np.float64) + feedback_delta(tr.tr_hid, tr.tr_err, B, sleep.beta)
            if precision is not None and precision.active:
                new = quantize(new, precision.bits, precision.weight_range)
            params.B[i] = new.astype(B.dtype)
    return params


def sleep_scheduler(batch_index: int, every: int) -> int:
    """Cycles to run after 1-based batch ``batch_index`` when sleeping every ``every`` batches."""
    if every < 1:
        raise ConfigError("sleep interval must be at least 1")
    return every if batch_index % every == 0 else 0
