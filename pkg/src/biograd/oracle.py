"""Reference gradients computed from a recorded forward pass.

These are the yardsticks for the online rule: exact spatiotemporal
backpropagation (recursive and closed-form), its approximation with
feedback matrices in place of the downstream path, and a brute-force
evaluation of the eligibility-trace sums. None of them are online; they are
written for clarity and run in O(T^2) or worse.

All functions take a :class:`~biograd.network.RecordedHistory` with a
leading batch axis. Gradients are averaged over the batch.
"""

from __future__ import annotations

import numpy as np

from .network import NetworkParams, RecordedHistory
from .neuron import NeuronHyper


def _z(v, hyper):
    return np.where(np.abs(v - hyper.v_th) < hyper.a, hyper.b, 0.0)


def _local_decay(history: RecordedHistory, i: int, hyper: NeuronHyper):
    """d_v * d v(y+1) / d v(y) along the (reset-aware) path, shape (N, T, n)."""
    v, o = history.v[i], history.o[i]
    return hyper.d_v * (1.0 - o - v * _z(v, hyper))


def _check(history: RecordedHistory, K: int):
    if history is None or len(history.v) != K or history.error is None:
        raise ValueError("incomplete history: need every layer and the final error")
    T = history.T
    for arr in (*history.inputs, *history.v, *history.o):
        if arr.shape[1] != T:
            raise ValueError("incomplete history: layers disagree on the number of steps")


def stbp_gradient(history: RecordedHistory, params: NetworkParams, hyper: NeuronHyper,
                  upstream=None):
    """Exact surrogate-gradient BPTT of cross-entropy on the output counts.

    Runs the backward recursion
    ``dL/dv(t) = z(t) * (s(t) - d_v v(t) dL/dv(t+1)) + d_v (1 - o(t)) dL/dv(t+1)``
    where ``s(t)`` is the spatial gradient reaching the spikes of step t.
    ``upstream`` overrides dL/dOutput(T) (defaults to the recorded error).
    Returns one gradient per W, averaged over the batch.
    """
    K = params.K
    _check(history, K)
    N, T = history.v[0].shape[:2]
    g_out = history.error if upstream is None else np.asarray(upstream, dtype=np.float64)
    grads = [None] * K
    spatial = np.broadcast_to(g_out[:, None, :], (N, T, g_out.shape[-1]))
    for i in range(K - 1, -1, -1):
        v, o = history.v[i], history.o[i]
        z = _z(v, hyper)
        delta = np.zeros_like(v)
        nxt = np.zeros((N, v.shape[-1]))
        for t in range(T - 1, -1, -1):
            nxt = (z[:, t] * (spatial[:, t] - hyper.d_v * v[:, t] * nxt)
                   + hyper.d_v * (1.0 - o[:, t]) * nxt)
            delta[:, t] = nxt
        grads[i] = np.einsum("nti,ntj->ij", delta, history.inputs[i]) / N
        spatial = delta @ params.W[i].astype(np.float64)
    return grads


def stbp_closed_form(history: RecordedHistory, params: NetworkParams, hyper: NeuronHyper):
    """Same gradient as :func:`stbp_gradient` by explicit nested sums.

    ``dL/dv(t) = sum_{x>=t} s(x) z(x) prod_{y=t}^{x-1} d_v Decay``, evaluated
    term by term with no recursion in time.
    """
    K = params.K
    _check(history, K)
    N, T = history.v[0].shape[:2]
    g_out = history.error
    spatial = np.repeat(g_out[:, None, :], T, axis=1)
    grads = [None] * K
    for i in range(K - 1, -1, -1):
        z = _z(history.v[i], hyper)
        dec = _local_decay(history, i, hyper)
        delta = np.zeros_like(history.v[i])
        for t in range(T):
            for x in range(t, T):
                delta[:, t] += spatial[:, x] * z[:, x] * np.prod(dec[:, t:x], axis=1)
        g = np.zeros(params.W[i].shape)
        for t in range(T):
            g += delta[:, t].T @ history.inputs[i][:, t]
        grads[i] = g / N
        spatial = delta @ params.W[i].astype(np.float64)
    return grads


def approx_gradient(history: RecordedHistory, B, hyper: NeuronHyper):
    """Gradient with the downstream path replaced by ``B[i] @ dL/dOutput(T)``.

    Evaluates, per layer,
    ``(B e) * sum_t o_pre(t) sum_{x>=t} z(v(x)) prod_{y=t}^{x-1} d_v Decay``
    directly from the record, reading the future of each step.
    """
    K = len(B)
    _check(history, K)
    N, T = history.v[0].shape[:2]
    grads = []
    for i in range(K):
        spatial = history.error @ np.asarray(B[i], dtype=np.float64).T  # (N, n_i)
        z = _z(history.v[i], hyper)
        dec = _local_decay(history, i, hyper)
        temporal = np.zeros((N, history.v[i].shape[-1], history.inputs[i].shape[-1]))
        for t in range(T):
            future = np.zeros((N, history.v[i].shape[-1]))
            for x in range(t, T):
                future += z[:, x] * np.prod(dec[:, t:x], axis=1)
            temporal += future[:, :, None] * history.inputs[i][:, t, None, :]
        grads.append(np.einsum("ni,nij->ij", spatial, temporal) / N)
    return grads


def unrolled_trace_oracle(history: RecordedHistory, hyper: NeuronHyper,
                          corr_index: str = "aligned"):
    """Brute-force trace sums for every layer.

    ``Tr_pre(t) = sum_{x<=t} o_pre(x) prod_{y=x}^{t-1} d_v Decay(y)`` and
    ``Tr_corr(T) = sum_t z(v(t')) Tr_pre(t)`` with ``t' = t`` (aligned) or
    ``t - 1`` (lagged). Returns a list of ``(tr_pre, tr_corr)`` where
    ``tr_pre`` has shape ``(N, T, n_post, n_pre)`` (every step) and
    ``tr_corr`` has shape ``(N, n_post, n_pre)`` (final step).
    """
    out = []
    for i in range(len(history.v)):
        o_in = history.inputs[i]
        N, T, n_pre = o_in.shape
        n_post = history.v[i].shape[-1]
        z = _z(history.v[i], hyper)
        dec = _local_decay(history, i, hyper)
        tr_pre = np.zeros((N, T, n_post, n_pre))
        tr_corr = np.zeros((N, n_post, n_pre))
        for t in range(T):
            for x in range(t + 1):
                carry = np.prod(dec[:, x:t], axis=1)  # (N, n_post)
                tr_pre[:, t] += carry[:, :, None] * o_in[:, x, None, :]
            if corr_index == "aligned":
                gate = z[:, t]
            elif t > 0:
                gate = z[:, t - 1]
            else:
                gate = np.zeros((N, n_post))
            tr_corr += gate[:, :, None] * tr_pre[:, t]
        out.append((tr_pre, tr_corr))
    return out
