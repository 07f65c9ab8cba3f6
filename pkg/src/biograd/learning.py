"""Online, local learning rule for the feedforward weights.

Each synapse keeps a presynaptic trace and a correlation trace. Both are
updated from quantities available at the current step only; at the end of
a sample the apical voltage turns the correlation trace into a weight change.

Two storage layouts are provided. :class:`DenseTraces` stores the two
traces per synapse, exactly as written. :class:`FactoredTraces` stores the
same numbers as products ``A @ O`` and ``G @ O`` of a per-neuron
``(n_post, T)`` envelope and the ``(T, n_pre)`` presynaptic spike history;
each step touches ``n_post * T`` numbers instead of ``n_post * n_pre``.
The two layouts agree to rounding error. :class:`SparseTraces` holds the
dense numbers but skips presynaptic inputs that have not spiked yet, whose
traces are exactly zero; it is the fast path for quantized runs and matches
:class:`DenseTraces` bit for bit.
"""

from __future__ import annotations

import numba
import numpy as np

from .errors import ConfigError
from .neuron import NeuronHyper, pseudo_grad
from .quant import quantize


def decay_factor(o_prev, v_prev, hyper: NeuronHyper):
    """``1 - o - v * z(v)`` of the previous step; negative values are legal."""
    return 1.0 - o_prev - v_prev * pseudo_grad(v_prev, hyper)


def update_pre_trace(tr_pre, decay, o_pre, hyper: NeuronHyper):
    """Decay each row by its postsynaptic factor, then add presynaptic spikes."""
    if tr_pre.shape[-2:] != (decay.shape[-1], o_pre.shape[-1]):
        raise ValueError(
            f"trace shape {tr_pre.shape} does not match "
            f"{decay.shape[-1]} post x {o_pre.shape[-1]} pre"
        )
    return hyper.d_v * decay[..., :, None] * tr_pre + o_pre[..., None, :]


def update_corr_trace(tr_corr, tr_pre, v, hyper: NeuronHyper):
    """Accumulate ``z(v) * tr_pre`` row-wise into the correlation trace."""
    if tr_corr.shape != tr_pre.shape or tr_pre.shape[-2] != v.shape[-1]:
        raise ValueError(
            f"shapes {tr_corr.shape}, {tr_pre.shape} and voltage {v.shape} disagree"
        )
    return tr_corr + pseudo_grad(v, hyper)[..., :, None] * tr_pre


def weight_delta(v_a, tr_corr, eta: float, hyper: NeuronHyper):
    """Per-sample weight change ``-eta * v_a / (T - t_error) * tr_corr``."""
    if hyper.T <= hyper.t_error:
        raise ConfigError(f"T={hyper.T} must exceed t_error={hyper.t_error}")
    return -eta * (v_a / hyper.window)[..., :, None] * tr_corr


def apply_batch_update(W, deltas, count: int | None = None):
    """Add the mean of ``deltas`` to ``W``.

    ``deltas`` is summed left to right, so the result does not depend on how
    the work was split. ``count`` overrides the divisor when the entries are
    themselves partial sums over several samples.
    """
    deltas = list(deltas)
    if not deltas:
        raise ValueError("no weight deltas to apply")
    total = np.zeros(W.shape, dtype=np.float64)
    for d in deltas:
        total += d
    n = len(deltas) if count is None else count
    return (W + total / n).astype(W.dtype)


class DenseTraces:
    """Per-synapse trace matrices for a batch, shape ``(N, n_post, n_pre)``."""

    def __init__(self, n: int, n_post: int, n_pre: int, T: int, hyper: NeuronHyper,
                 precision=None):
        self.hyper = hyper
        self.precision = precision
        self.tr_pre = np.zeros((n, n_post, n_pre))
        self.tr_corr = np.zeros((n, n_post, n_pre))

    def _q(self, x):
        if self.precision is None or self.precision.bits == 32:
            return x
        return quantize(x, self.precision.bits, self.precision.trace_range)

    def update_pre(self, decay, o_pre):
        self.tr_pre = self._q(update_pre_trace(self.tr_pre, decay, o_pre, self.hyper))

    def update_corr(self, v):
        self.tr_corr = self._q(update_corr_trace(self.tr_corr, self.tr_pre, v, self.hyper))

    def pre(self):
        return self.tr_pre

    def corr(self):
        return self.tr_corr

    def delta_sum(self, v_a, eta: float):
        """Sum over the batch of the per-sample weight changes."""
        if self.hyper.T <= self.hyper.t_error:
            raise ConfigError(f"T={self.hyper.T} must exceed t_error={self.hyper.t_error}")
        return (-eta / self.hyper.window) * np.einsum("ni,nij->ij", v_a, self.tr_corr)


class FactoredTraces:
    """Exact low-rank storage of the same two traces.

    Column ``x`` of ``env`` holds how much the presynaptic spikes of step
    ``x`` still count in the presynaptic trace; ``gain`` accumulates the
    pseudo-gradient-weighted envelope for the correlation trace.
    """

    def __init__(self, n: int, n_post: int, n_pre: int, T: int, hyper: NeuronHyper,
                 precision=None):
        if precision is not None and precision.bits != 32:
            raise ConfigError("quantized traces need the dense layout")
        self.hyper = hyper
        self.env = np.zeros((n, n_post, T))
        self.gain = np.zeros((n, n_post, T))
        self.history = np.zeros((n, T, n_pre))
        self.t = 0

    def update_pre(self, decay, o_pre):
        t = self.t
        if t:
            self.env[:, :, :t] *= (self.hyper.d_v * decay)[:, :, None]
        self.env[:, :, t] = 1.0
        self.history[:, t] = o_pre
        self.t = t + 1

    def update_corr(self, v):
        t = self.t
        self.gain[:, :, :t] += pseudo_grad(v, self.hyper)[:, :, None] * self.env[:, :, :t]

    def pre(self):
        return self.env @ self.history

    def corr(self):
        return self.gain @ self.history

    def delta_sum(self, v_a, eta: float):
        if self.hyper.T <= self.hyper.t_error:
            raise ConfigError(f"T={self.hyper.T} must exceed t_error={self.hyper.t_error}")
        n, n_post, T = self.gain.shape
        left = (v_a[:, :, None] * self.gain).transpose(1, 0, 2).reshape(n_post, n * T)
        right = self.history.reshape(n * T, -1)
        return (-eta / self.hyper.window) * (left @ right)


@numba.njit(cache=True)
def _snap(x, step, top):
    k = np.rint(x / step)
    if k > top:
        k = top
    elif k < -top:
        k = -top
    return k * step


@numba.njit(cache=True)
def _sparse_pre(pre, seen, scaled_decay, o_pre, step, top):
    N, P, Q = pre.shape
    for n in range(N):
        for j in range(P):
            s = o_pre[n, j]
            if s != 0.0:
                seen[n, j] = True
            if not seen[n, j]:
                continue
            for i in range(Q):
                x = scaled_decay[n, i] * pre[n, j, i] + s
                pre[n, j, i] = _snap(x, step, top) if step > 0.0 else x


@numba.njit(cache=True)
def _sparse_corr(corr, pre, seen, z, step, top):
    N, P, Q = pre.shape
    for n in range(N):
        for j in range(P):
            if not seen[n, j]:
                continue
            for i in range(Q):
                x = corr[n, j, i] + z[n, i] * pre[n, j, i]
                corr[n, j, i] = _snap(x, step, top) if step > 0.0 else x


class SparseTraces:
    """Same numbers as :class:`DenseTraces`, stored pre-major as ``(N, n_pre, n_post)``.

    Columns of inputs that have been silent since sample onset are never
    touched, since their traces are still exactly zero.
    """

    def __init__(self, n: int, n_post: int, n_pre: int, T: int, hyper: NeuronHyper,
                 precision=None):
        self.hyper = hyper
        self.precision = precision
        self._pre = np.zeros((n, n_pre, n_post))
        self._corr = np.zeros((n, n_pre, n_post))
        self._seen = np.zeros((n, n_pre), dtype=np.bool_)
        self._step, self._top = 0.0, 0.0
        if precision is not None and precision.bits != 32:
            self._step = precision.trace_range / 2 ** (precision.bits - 1)
            self._top = float(2 ** (precision.bits - 1) - 1)

    def update_pre(self, decay, o_pre):
        scaled = np.ascontiguousarray(self.hyper.d_v * decay, dtype=np.float64)
        _sparse_pre(self._pre, self._seen, scaled,
                    np.ascontiguousarray(o_pre, dtype=np.float64), self._step, self._top)

    def update_corr(self, v):
        z = np.ascontiguousarray(pseudo_grad(v, self.hyper), dtype=np.float64)
        _sparse_corr(self._corr, self._pre, self._seen, z, self._step, self._top)

    def pre(self):
        return self._pre.transpose(0, 2, 1)

    def corr(self):
        return self._corr.transpose(0, 2, 1)

    def delta_sum(self, v_a, eta: float):
        if self.hyper.T <= self.hyper.t_error:
            raise ConfigError(f"T={self.hyper.T} must exceed t_error={self.hyper.t_error}")
        return (-eta / self.hyper.window) * np.einsum("ni,nji->ij", v_a, self._corr)


TRACE_LAYOUTS = {"dense": DenseTraces, "factored": FactoredTraces, "sparse": SparseTraces}
