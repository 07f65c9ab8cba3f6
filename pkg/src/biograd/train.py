"""Training, evaluation and ablation drivers."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from . import rng as rngs
from .config import RunConfig
from .data import EventSource, PoissonSource, list_nmnist, load_mnist, make_batches
from .errors import ConfigError
from .learning import apply_batch_update
from .metrics import accuracy, alignment_angle, magnitude_correlation
from .network import NetworkParams, forward_batch, init_network
from .optim import AdamState, adam_step, sgd_step
from .oracle import stbp_gradient
from .quant import quantize
from .sleep import run_sleep_phase, sleep_scheduler

log = logging.getLogger(__name__)

EVAL_KEY = 1 << 20  # encoding key for validation/test passes, distinct from any epoch


@dataclass
class Splits:
    train: object
    val: object
    test: object


def load_splits(cfg: RunConfig) -> Splits:
    """Train/validation/test spike sources for ``cfg``.

    Validation is the last ``val_size`` samples of the canonical training
    order; ``train_subset`` then keeps the first samples of what remains.
    """
    root = Path(cfg.data_dir)
    if cfg.dataset == "mnist":
        try:
            full, test = load_mnist(root, "train"), load_mnist(root, "test")
        except FileNotFoundError as exc:
            raise ConfigError(f"MNIST files not found: {exc.filename}") from None
        train, val = full.split(cfg.val_size)
        if cfg.train_subset:
            train = train.subset(slice(0, cfg.train_subset))
        if cfg.test_subset:
            test = test.subset(slice(0, cfg.test_subset))
        T = cfg.timesteps
        return Splits(PoissonSource(train, T, 0), PoissonSource(val, T, len(full) - cfg.val_size),
                      PoissonSource(test, T, len(full)))
    paths, labels = list_nmnist(root, "train")
    full = EventSource(paths, labels, T=cfg.timesteps)
    cut = len(full) - cfg.val_size
    train, val = full.subset(slice(0, cut)), full.subset(slice(cut, len(full)))
    if cfg.train_subset:
        train = train.subset(slice(0, cfg.train_subset))
    tpaths, tlabels = list_nmnist(root, "test")
    test = EventSource(tpaths, tlabels, T=cfg.timesteps)
    if cfg.test_subset:
        test = test.subset(slice(0, cfg.test_subset))
    return Splits(train, val, test)


def _error_uniforms(seed, epoch, index, T, n_k, offset):
    return np.stack([rngs.stream(seed, "error-spikes", epoch, offset + int(i)).random((T, n_k))
                     for i in index])


class Trainer:
    """Owns the parameters and optimizer state of one run."""

    def __init__(self, cfg: RunConfig, params: NetworkParams | None = None):
        self.cfg = cfg
        self.hyper = cfg.neuron
        if params is None:
            params = init_network(cfg.dims, cfg.feedback_init,
                                  rngs.stream(cfg.seed, "weight-init"))
        if params.dims != cfg.dims:
            raise ConfigError(f"parameters have dims {params.dims}, config says {cfg.dims}")
        self.params = params
        self.precision = cfg.precision
        if self.precision.active:
            self._quantize_params()
        self.adam = [AdamState() for _ in params.W]
        self.sleep_rng = rngs.stream(cfg.seed, "sleep-spikes")
        self.batches_seen = 0

    def _quantize_params(self):
        spec = self.precision
        self.params.W = [quantize(w, spec.bits, spec.weight_range).astype(w.dtype)
                         for w in self.params.W]
        self.params.B = [quantize(b, spec.bits, spec.weight_range).astype(b.dtype)
                         for b in self.params.B[:-1]] + [self.params.B[-1]]

    def _map(self, fn, items):
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(self.cfg.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]

    def _shards(self, index):
        s = self.cfg.shard_size
        return [index[i:i + s] for i in range(0, len(index), s)]

    def _shard_update(self, source, index, epoch):
        cfg, hyper = self.cfg, self.hyper
        spikes = source.encode(index, cfg.seed, epoch)
        labels = source.labels[index]
        if cfg.method == "biograd":
            uniforms = None
            if cfg.error_mode == "bernoulli":
                uniforms = _error_uniforms(cfg.seed, epoch, index, hyper.T,
                                           self.params.dims[-1], getattr(source, "offset", 0))
            res = forward_batch(self.params, spikes, labels, hyper, error_mode=cfg.error_mode,
                                error_rng=uniforms, learn=True, layout=cfg.trace_layout,
                                corr_index=cfg.corr_index,
                                precision=self.precision if self.precision.active else None)
            deltas = [tr.delta_sum(va, cfg.lr) for tr, va in zip(res.traces, res.v_a)]
        else:
            res = forward_batch(self.params, spikes, labels, hyper, learn=False, record=True)
            deltas = [g * len(index) for g in stbp_gradient(res.history, self.params, hyper)]
        return res.predictions, deltas

    def train_batch(self, source, index, epoch) -> np.ndarray:
        """One update from the samples ``index`` of ``source``; returns train predictions."""
        parts = self._map(lambda ix: self._shard_update(source, ix, epoch), self._shards(index))
        preds = np.concatenate([p for p, _ in parts])
        n = len(index) if self.cfg.batch_reduction == "mean" else 1
        for i in range(self.params.K):
            shard_sums = [d[i] for _, d in parts]
            W = self.params.W[i]
            if self.cfg.method == "biograd":
                W = apply_batch_update(W, shard_sums, count=n)
            else:
                g = apply_batch_update(np.zeros(W.shape), shard_sums, count=n)
                if self.cfg.method == "stbp-sgd":
                    W = sgd_step(W, g, self.cfg.lr)
                else:
                    W, _ = adam_step(W, g, self.adam[i], self.cfg.lr)
            self.params.W[i] = W
        if self.precision.active:
            self.params.W = [quantize(w, self.precision.bits, self.precision.weight_range)
                             .astype(w.dtype) for w in self.params.W]
        self.batches_seen += 1
        if self.cfg.method == "biograd" and self.cfg.sleep and self.params.K > 1:
            cycles = sleep_scheduler(self.batches_seen, self.cfg.sleep_every)
            if cycles:
                run_sleep_phase(self.params, cycles, self.hyper, self.cfg.sleep_hyper,
                                self.sleep_rng, self.precision)
        return preds

    def train_epoch(self, source, epoch: int) -> float:
        order = make_batches(len(source), self.cfg.batch_size,
                             rngs.stream(self.cfg.seed, "shuffle", epoch))
        correct = 0
        for index in order:
            preds = self.train_batch(source, index, epoch)
            correct += int(np.sum(preds == source.labels[index]))
        return correct / len(source)

    def predict(self, source, batch: int = 500) -> np.ndarray:
        index = np.arange(len(source))
        chunks = [index[i:i + batch] for i in range(0, len(index), batch)]

        def run(ix):
            spikes = source.encode(ix, self.cfg.seed, EVAL_KEY)
            return forward_batch(self.params, spikes, None, self.hyper, learn=False).predictions

        return np.concatenate(self._map(run, chunks))

    def evaluate(self, source) -> float:
        return accuracy(self.predict(source), source.labels)

    def alignment(self) -> tuple[list[float], list[float]]:
        angles, corrs = [], []
        for i in range(self.params.K - 1):
            try:
                angles.append(alignment_angle(self.params.B[i], self.params.W, i))
            except ValueError:
                angles.append(float("nan"))
            try:
                corrs.append(magnitude_correlation(self.params.B[i], self.params.W, i))
            except ValueError:
                corrs.append(float("nan"))
        return angles, corrs


def _fmt(x) -> str:
    return "nan" if x is None or x != x else f"{x:.6f}"


@dataclass
class RunResult:
    rows: list[dict] = field(default_factory=list)
    best_val: float = -1.0
    test_at_best: float = float("nan")
    best_epoch: int = -1
    final_angles: list[float] = field(default_factory=list)
    final_corrs: list[float] = field(default_factory=list)
    params: NetworkParams | None = None
    best_params: NetworkParams | None = None

    def csv_text(self) -> str:
        if not self.rows:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()


def train_run(cfg: RunConfig, splits: Splits | None = None, out_dir=None,
              params: NetworkParams | None = None) -> RunResult:
    """Train for ``cfg.epochs`` epochs, validating after each.

    Row 0 holds the untrained network. The test accuracy reported is the one
    at the epoch with the highest validation accuracy (earliest on ties).
    With ``out_dir`` the metrics CSV, the config and the best checkpoint are
    written there.
    """
    splits = splits or load_splits(cfg)
    trainer = Trainer(cfg, params)
    result = RunResult()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
    for epoch in range(cfg.epochs + 1):
        t0 = time.perf_counter()
        train_acc = trainer.train_epoch(splits.train, epoch) if epoch else None
        val_acc = trainer.evaluate(splits.val) if len(splits.val) else float("nan")
        test_acc = trainer.evaluate(splits.test)
        angles, corrs = trainer.alignment()
        row = {"epoch": str(epoch), "train_acc": _fmt(train_acc), "val_acc": _fmt(val_acc),
               "test_acc": _fmt(test_acc)}
        for i, (a, c) in enumerate(zip(angles, corrs)):
            row[f"angle_l{i + 1}"] = _fmt(a)
            row[f"magcorr_l{i + 1}"] = _fmt(c)
        result.rows.append(row)
        score = val_acc if val_acc == val_acc else test_acc
        if score > result.best_val:
            result.best_val, result.test_at_best, result.best_epoch = score, test_acc, epoch
            result.best_params = trainer.params.copy()
            if out is not None:
                checkpoint.save(out / "best.ckpt", trainer.params, cfg.seed, epoch)
        if out is not None:
            (out / "metrics.csv").write_text(result.csv_text())
        log.info("epoch %d train %s val %s test %s angles %s (%.1fs)", epoch, _fmt(train_acc),
                 _fmt(val_acc), _fmt(test_acc), [round(a, 2) for a in angles],
                 time.perf_counter() - t0)
    result.final_angles, result.final_corrs = trainer.alignment()
    result.params = trainer.params
    return result


ABLATIONS = {
    "sleep": [{"feedback_init": f, "sleep": s} for f in ("fwd", "rand") for s in (True, False)],
    "sleep-freq": [{"sleep_every": x} for x in (1, 16, 64, 256)],
    "precision": [{"bits": b} for b in (32, 16, 8)],
    "layers": [{"hidden": h} for h in (0, 1, 2)],
}


def _cell_config(cfg: RunConfig, cell: dict) -> RunConfig:
    cell = dict(cell)
    hidden = cell.pop("hidden", None)
    out = dataclasses.replace(cfg, **cell)
    if hidden is not None:
        dims = cfg.dims
        out.arch = "-".join(str(d) for d in [dims[0], *dims[1:-1][:hidden], dims[-1]])
        if hidden > len(dims) - 2:
            raise ConfigError(f"architecture {cfg.arch} has fewer than {hidden} hidden layers")
    return out.resolved()


def run_ablation(cfg: RunConfig, study: str, seeds=(0,), out_dir=None,
                 splits: Splits | None = None) -> list[dict]:
    """Run every cell of ``study`` for every seed; one result row per (cell, seed)."""
    if study not in ABLATIONS:
        raise ConfigError(f"unknown study {study!r}; expected one of {sorted(ABLATIONS)}")
    splits = splits or load_splits(cfg)
    rows = []
    for cell in ABLATIONS[study]:
        for seed in seeds:
            ccfg = _cell_config(dataclasses.replace(cfg, seed=seed), cell)
            sub = None if out_dir is None else Path(out_dir) / (
                "_".join(f"{k}-{v}" for k, v in cell.items()) + f"_seed{seed}")
            res = train_run(ccfg, splits, sub)
            row = {"study": study, **{k: str(v) for k, v in cell.items()}, "seed": str(seed),
                   "best_epoch": str(res.best_epoch), "best_val": _fmt(res.best_val),
                   "test_acc": _fmt(res.test_at_best)}
            for i, a in enumerate(res.final_angles):
                row[f"angle_l{i + 1}"] = _fmt(a)
            rows.append(row)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        names = []
        for r in rows:
            names += [k for k in r if k not in names]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=names, restval="", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        (Path(out_dir) / f"ablation_{study}.csv").write_text(buf.getvalue())
    return rows
