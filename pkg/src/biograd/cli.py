"""Command-line entry point: ``biograd {train,eval,ablate,export-activations}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig, parse_config
from .errors import BioGradError
from .metrics import export_hidden_counts
from .train import ABLATIONS, EVAL_KEY, Trainer, load_splits, run_ablation, train_run

log = logging.getLogger("biograd")


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise BioGradError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for key in ("seed", "dataset", "data_dir"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = str(val)
    return out


def _config(args) -> RunConfig:
    return parse_config(args.config, _overrides(args))


def _load_params(path, cfg: RunConfig):
    params, _, _ = checkpoint.load(path)
    if params.dims != cfg.dims:
        # the checkpoint is the authority on shapes
        cfg.arch = "-".join(map(str, params.dims))
    return params


def cmd_train(args) -> int:
    cfg = _config(args)
    res = train_run(cfg, out_dir=args.out)
    print(f"best epoch {res.best_epoch}: val {res.best_val:.4f} test {res.test_at_best:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    params = _load_params(args.checkpoint, cfg)
    splits = load_splits(cfg)
    acc = Trainer(cfg, params).evaluate(splits.test)
    print(f"test accuracy {acc:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.csv").write_text(f"checkpoint,test_acc\n{args.checkpoint},{acc:.6f}\n")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    rows = run_ablation(cfg, args.study, seeds, out_dir=args.out)
    for r in rows:
        print(",".join(f"{k}={v}" for k, v in r.items()))
    return 0


def cmd_export(args) -> int:
    cfg = _config(args)
    params = _load_params(args.checkpoint, cfg)
    source = getattr(load_splits(cfg), args.split)
    n = len(source) if args.limit is None else min(args.limit, len(source))
    out = Path(args.out or "hidden_counts.csv")
    if out.is_dir():
        out = out / "hidden_counts.csv"
    rows = export_hidden_counts(params, source, np.arange(n), cfg.neuron, out,
                                seed=cfg.seed, key=EVAL_KEY)
    print(f"wrote {rows} rows to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biograd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="flat key = value file")
        p.add_argument("--seed", type=int)
        p.add_argument("--dataset", choices=("mnist", "nmnist"))
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--out", help="output directory (file for export-activations)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key; repeatable")

    p = sub.add_parser("train", help="train and write metrics.csv and best.ckpt")
    common(p)
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("eval", help="test accuracy of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("ablate", help="run one of the ablation grids")
    common(p)
    p.add_argument("--study", required=True, choices=sorted(ABLATIONS))
    p.add_argument("--seeds", help="comma-separated seeds (default: --seed)")
    p.set_defaults(func=cmd_ablate)
    p = sub.add_parser("export-activations", help="hidden-layer spike counts as CSV")
    common(p)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (BioGradError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
