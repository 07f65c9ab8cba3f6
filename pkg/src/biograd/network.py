"""Fully connected two-compartment SNN: parameters and the sample loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .learning import TRACE_LAYOUTS, decay_factor
from .neuron import (
    ERROR_MODES,
    NeuronHyper,
    accumulate_output_and_error,
    apical_step,
    encode_error_spikes,
    lif_step,
)

FEEDBACK_INITS = ("fwd", "rand")
CORR_INDEX = ("aligned", "lagged")


@dataclass
class NetworkParams:
    """Layer sizes ``dims = [n_0, ..., n_K]``, feedforward ``W`` and feedback ``B``.

    ``W[i]`` has shape ``(dims[i+1], dims[i])`` and ``B[i]`` has shape
    ``(dims[i+1], dims[-1])``; ``B[-1]`` is the identity. Indices are 0-based,
    so ``W[0]`` feeds the first hidden layer.
    """

    dims: list[int]
    W: list[np.ndarray]
    B: list[np.ndarray]

    def __post_init__(self):
        self.dims = [int(d) for d in self.dims]
        if len(self.W) != len(self.dims) - 1 or len(self.B) != len(self.W):
            raise ValueError("need one W and one B per layer")
        for i, (w, b) in enumerate(zip(self.W, self.B)):
            if w.shape != (self.dims[i + 1], self.dims[i]):
                raise ValueError(f"W[{i}] has shape {w.shape}, expected "
                                 f"{(self.dims[i + 1], self.dims[i])}")
            if b.shape != (self.dims[i + 1], self.dims[-1]):
                raise ValueError(f"B[{i}] has shape {b.shape}, expected "
                                 f"{(self.dims[i + 1], self.dims[-1])}")

    @property
    def K(self) -> int:
        return len(self.W)

    def copy(self) -> "NetworkParams":
        return NetworkParams(list(self.dims), [w.copy() for w in self.W],
                             [b.copy() for b in self.B])


def init_weights(dims, rng: np.random.Generator, dtype=np.float32) -> list[np.ndarray]:
    """Uniform in +-sqrt(1/fan_in) for every layer."""
    out = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(1.0 / n_in)
        out.append(rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype))
    return out


def init_feedback(W, mode: str, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Feedback matrices for every layer.

    ``fwd``: ``B[i] = W[i+1].T @ W[i+2].T @ ... @ W[-1].T`` (identity for the
    output layer). ``rand``: for hidden layers, drawn like the transpose of the
    next feedforward matrix, U(+-sqrt(1/dims[i+1])), shaped ``(dims[i+1], n_K)``.
    """
    if mode not in FEEDBACK_INITS:
        raise ConfigError(f"unknown feedback init {mode!r}; expected one of {FEEDBACK_INITS}")
    K = len(W)
    dtype = W[-1].dtype
    n_k = W[-1].shape[0]
    B = [None] * K
    B[K - 1] = np.eye(n_k, dtype=dtype)
    for i in range(K - 2, -1, -1):
        if mode == "fwd":
            B[i] = (W[i + 1].T.astype(np.float64) @ B[i + 1].astype(np.float64)).astype(dtype)
        else:
            n_i = W[i].shape[0]
            bound = np.sqrt(1.0 / n_i)
            B[i] = rng.uniform(-bound, bound, size=(n_i, n_k)).astype(dtype)
    return B


def init_network(dims, feedback_init: str, rng: np.random.Generator) -> NetworkParams:
    W = init_weights(dims, rng)
    return NetworkParams(list(dims), W, init_feedback(W, feedback_init, rng))


@dataclass
class RecordedHistory:
    """Per-layer, per-step record of a forward pass; arrays are ``(N, T, n)``."""

    inputs: list[np.ndarray]   # presynaptic spikes seen by each layer
    v: list[np.ndarray]        # somatic voltage before any reset
    o: list[np.ndarray]        # somatic spikes
    output: np.ndarray         # final output spike counts (N, n_K)
    error: np.ndarray          # softmax(output) - one_hot, i.e. dL/dOutput(T)
    labels: np.ndarray

    @property
    def T(self) -> int:
        return self.v[0].shape[1]


@dataclass
class ForwardResult:
    predictions: np.ndarray
    output: np.ndarray
    counts: list[np.ndarray]
    v_a: list[np.ndarray] = field(default_factory=list)
    traces: list = field(default_factory=list)
    history: RecordedHistory | None = None


def forward_batch(params: NetworkParams, spikes, labels, hyper: NeuronHyper, *,
                  error_mode: str = "bernoulli", error_rng=None, learn: bool = True,
                  layout: str = "factored", corr_index: str = "aligned",
                  precision=None, record: bool = False, held_error=None) -> ForwardResult:
    """Present a batch of spike trains ``(N, T, n_0)`` for ``T`` steps.

    With ``learn`` the eligibility traces and apical voltages are maintained
    alongside the somatic dynamics; ``labels`` must then be given. For
    ``bernoulli`` errors ``error_rng`` is a Generator or a ``(N, T, n_K)``
    array of uniforms. ``held_error`` (exact mode only) replaces the running
    error by a fixed vector for the apical drive.

    ``corr_index`` chooses which voltage gates the correlation trace at step
    t: ``aligned`` uses v(t), which reproduces the surrogate gradient;
    ``lagged`` uses v(t-1).
    """
    if error_mode not in ERROR_MODES:
        raise ConfigError(f"unknown error mode {error_mode!r}")
    if corr_index not in CORR_INDEX:
        raise ConfigError(f"unknown correlation index {corr_index!r}")
    if layout not in TRACE_LAYOUTS:
        raise ConfigError(f"unknown trace layout {layout!r}")
    spikes = np.asarray(spikes)
    N, T, D = spikes.shape
    if T != hyper.T:
        raise ValueError(f"spike train has {T} steps, hyperparameters say {hyper.T}")
    if D != params.dims[0]:
        raise ValueError(f"input width {D} does not match network input {params.dims[0]}")
    if learn and labels is None:
        raise ValueError("learning needs labels")
    if held_error is not None and error_mode != "exact":
        raise ConfigError("held_error only applies in exact error mode")

    K = params.K
    dims = params.dims
    W = [w.astype(np.float64, copy=False) for w in params.W]
    B = [b.astype(np.float64, copy=False) for b in params.B]
    v = [np.zeros((N, n)) for n in dims[1:]]
    o = [np.zeros((N, n)) for n in dims[1:]]
    counts = [np.zeros((N, n)) for n in dims[1:]]
    v_a = [np.zeros((N, n)) for n in dims[1:]]
    traces = []
    if learn:
        cls = TRACE_LAYOUTS[layout]
        traces = [cls(N, dims[i + 1], dims[i], T, hyper, precision) for i in range(K)]
    if learn and error_mode == "bernoulli":
        if error_rng is None:
            raise ValueError("bernoulli error spikes need error_rng")
        if isinstance(error_rng, np.random.Generator):
            uniforms = error_rng.random((N, T, dims[-1]))
        else:
            uniforms = np.asarray(error_rng)
            if uniforms.shape != (N, T, dims[-1]):
                raise ValueError(f"error uniforms must be shaped {(N, T, dims[-1])}")
    rec_in = [np.zeros((N, T, n)) for n in dims[:-1]] if record else None
    rec_v = [np.zeros((N, T, n)) for n in dims[1:]] if record else None
    rec_o = [np.zeros((N, T, n)) for n in dims[1:]] if record else None
    aligned = corr_index == "aligned"

    output = np.zeros((N, dims[-1]))
    e = None
    for t in range(T):
        x = spikes[:, t].astype(np.float64)
        for i in range(K):
            if learn:
                traces[i].update_pre(decay_factor(o[i], v[i], hyper), x)
                if not aligned:
                    traces[i].update_corr(v[i])
            v[i], o[i] = lif_step(v[i], o[i], W[i], x, hyper)
            if learn and aligned:
                traces[i].update_corr(v[i])
            counts[i] += o[i]
            if record:
                rec_in[i][:, t] = x
                rec_v[i][:, t] = v[i]
                rec_o[i][:, t] = o[i]
            x = o[i]
        if labels is None:
            output = output + o[-1]
            continue
        output, e = accumulate_output_and_error(output, o[-1], labels)
        if learn and t >= hyper.t_error:
            if error_mode == "exact":
                drive = e if held_error is None else held_error
                for i in range(K):
                    v_a[i] = apical_step(v_a[i], B[i], None, None, "exact", drive)
            else:
                pos, neg = encode_error_spikes(e, t, hyper, "bernoulli", uniforms[:, t])
                for i in range(K):
                    v_a[i] = apical_step(v_a[i], B[i], pos, neg, "bernoulli")

    history = None
    if record:
        history = RecordedHistory(rec_in, rec_v, rec_o, output, e,
                                  None if labels is None else np.asarray(labels))
    return ForwardResult(np.argmax(output, axis=1), output, counts, v_a, traces, history)


def forward_sample(params: NetworkParams, spike_train, label, hyper: NeuronHyper,
                   mode: str = "bernoulli", rng=None, **kwargs):
    """Single-sample wrapper around :func:`forward_batch`.

    Returns ``(prediction, result)``.
    """
    spikes = np.asarray(spike_train)[None]
    labels = None if label is None else np.array([label])
    if rng is not None and not isinstance(rng, np.random.Generator):
        rng = np.asarray(rng)[None]
    res = forward_batch(params, spikes, labels, hyper, error_mode=mode, error_rng=rng,
                        learn=kwargs.pop("learn", label is not None), **kwargs)
    return int(res.predictions[0]), res
