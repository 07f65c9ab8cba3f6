"""Accuracy and feedback/feedforward alignment measures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.shape} predictions vs {labels.shape} labels")
    if predictions.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(predictions == labels))


def feedback_target(W, layer: int) -> np.ndarray:
    """``W[layer+1].T @ ... @ W[-1].T``: the matrix true backprop would use."""
    n_k = W[-1].shape[0]
    target = np.eye(n_k)
    for w in reversed(W[layer + 1:]):
        target = np.asarray(w, dtype=np.float64).T @ target
    return target


def alignment_angle(B, W, layer: int) -> float:
    """Angle in degrees between the flattened ``B`` and its feedforward target."""
    b = np.asarray(B, dtype=np.float64).ravel()
    t = feedback_target(W, layer).ravel()
    if b.shape != t.shape:
        raise ValueError(f"B has {b.size} entries, target has {t.size}")
    nb, nt = np.linalg.norm(b), np.linalg.norm(t)
    if nb == 0 or nt == 0:
        raise ValueError("alignment angle undefined for a zero matrix")
    cos = np.clip(b @ t / (nb * nt), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def magnitude_correlation(B, W, layer: int) -> float:
    """Pearson correlation between ``|B|`` and ``|target|`` entries."""
    b = np.abs(np.asarray(B, dtype=np.float64)).ravel()
    t = np.abs(feedback_target(W, layer)).ravel()
    if b.std() == 0 or t.std() == 0:
        raise ValueError("correlation undefined for a constant magnitude vector")
    return float(np.corrcoef(b, t)[0, 1])


def hidden_counts_csv(labels, counts) -> str:
    """CSV text with one row per sample: label, then spike counts of every hidden layer."""
    header = ["label"]
    for li, c in enumerate(counts):
        header += [f"l{li + 1}_n{j}" for j in range(c.shape[1])]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for n, lab in enumerate(labels):
        row = [int(lab)]
        for c in counts:
            row += [int(x) for x in c[n]]
        writer.writerow(row)
    return buf.getvalue()


def export_hidden_counts(params, source, index, hyper, out, seed: int = 0,
                         key: int = 0, batch: int = 256) -> int:
    """Run the net on ``source[index]`` and write hidden-layer spike counts to ``out``.

    Returns the number of data rows written.
    """
    from .network import forward_batch

    index = np.asarray(index)
    counts = [[] for _ in range(params.K - 1)]
    for s in range(0, len(index), batch):
        chunk = index[s:s + batch]
        res = forward_batch(params, source.encode(chunk, seed, key), None, hyper, learn=False)
        for li in range(params.K - 1):
            counts[li].append(res.counts[li])
    if len(index):
        counts = [np.concatenate(c) for c in counts]
    else:
        counts = [np.zeros((0, params.dims[li + 1])) for li in range(params.K - 1)]
    Path(out).write_text(hidden_counts_csv(source.labels[index], counts))
    return len(index)
