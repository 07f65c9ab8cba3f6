"""Run configuration: defaults, flat ``key = value`` files and overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .neuron import ERROR_MODES, NeuronHyper
from .network import CORR_INDEX, FEEDBACK_INITS
from .quant import ALLOWED_BITS, PrecisionSpec
from .sleep import SleepHyper

DATASETS = ("mnist", "nmnist")
METHODS = ("biograd", "stbp-sgd", "stbp-adam")
LAYOUTS = ("auto", "dense", "factored", "sparse")
REDUCTIONS = ("mean", "sum")

DEFAULT_ARCH = {"mnist": "784-500-100-10", "nmnist": "2312-500-100-10"}
DEFAULT_LR = {
    ("biograd", "mnist"): 1e-3,
    ("biograd", "nmnist"): 1e-3,
    ("stbp-sgd", "mnist"): 0.9e-2,
    ("stbp-sgd", "nmnist"): 0.9e-2,
    ("stbp-adam", "mnist"): 5e-4,
    ("stbp-adam", "nmnist"): 1e-4,
}


@dataclass
class RunConfig:
    dataset: str = "mnist"
    data_dir: str = ""
    arch: str | None = None
    method: str = "biograd"
    feedback_init: str = "fwd"
    error_mode: str = "bernoulli"
    corr_index: str = "aligned"
    layout: str = "auto"
    # training
    epochs: int = 100
    batch_size: int = 128
    batch_reduction: str = "mean"
    lr: float | None = None
    seed: int = 0
    train_subset: int = 0     # 0 = all training samples after the validation hold-out
    val_size: int = 10000
    test_subset: int = 0      # 0 = whole test set
    shard_size: int = 32      # fixed reduction granularity; results do not depend on workers
    workers: int = 1
    # neuron
    voltage_decay: float | None = None
    threshold: float = 0.3
    grad_window: float = 0.3
    grad_amp: float = 1.0
    timesteps: int | None = None
    t_error: int | None = None
    # sleep
    sleep: bool = True
    sleep_every: int = 1
    sleep_lr: float = 1e-4 / 3
    sleep_steps: int = 50
    sleep_p_spike: float = 0.25
    sleep_batch: int = 128
    # precision
    bits: int = 32
    weight_range: float = 1.0
    trace_range: float = 8.0

    def resolved(self) -> "RunConfig":
        """Fill dataset- and method-dependent defaults, then validate."""
        self.validate_choices()
        nh = NeuronHyper.for_dataset(self.dataset)
        out = dataclasses.replace(self)
        if out.arch is None:
            out.arch = DEFAULT_ARCH[out.dataset]
        if out.lr is None:
            out.lr = DEFAULT_LR[(out.method, out.dataset)]
        if out.voltage_decay is None:
            out.voltage_decay = nh.d_v
        if out.timesteps is None:
            out.timesteps = nh.T
        if out.t_error is None:
            out.t_error = nh.t_error
        out.validate()
        return out

    def validate_choices(self):
        for name, allowed in (("dataset", DATASETS), ("method", METHODS),
                              ("feedback_init", FEEDBACK_INITS), ("error_mode", ERROR_MODES),
                              ("corr_index", CORR_INDEX), ("layout", LAYOUTS),
                              ("batch_reduction", REDUCTIONS),
                              ("bits", ALLOWED_BITS)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    def validate(self):
        self.validate_choices()
        dims = self.dims
        if len(dims) < 2 or min(dims) < 1:
            raise ConfigError(f"bad architecture {self.arch!r}")
        if self.timesteps <= self.t_error or self.t_error < 0:
            raise ConfigError(f"need 0 <= t_error < timesteps, got {self.t_error}, {self.timesteps}")
        for name in ("batch_size", "shard_size", "workers", "sleep_every", "sleep_steps",
                     "sleep_batch", "val_size"):
            if getattr(self, name) < (0 if name == "val_size" else 1):
                raise ConfigError(f"{name} out of range: {getattr(self, name)}")
        if self.epochs < 0 or self.train_subset < 0 or self.test_subset < 0:
            raise ConfigError("epochs and subset sizes must be non-negative")
        if not 0 < self.voltage_decay <= 1:
            raise ConfigError(f"voltage_decay must lie in (0, 1], got {self.voltage_decay}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0 <= self.sleep_p_spike <= 0.5:
            raise ConfigError("sleep_p_spike must lie in [0, 0.5]")
        if self.sleep_lr < 0 or self.weight_range <= 0 or self.trace_range <= 0:
            raise ConfigError("sleep_lr and quantization ranges must be positive")

    @property
    def dims(self) -> list[int]:
        try:
            return [int(x) for x in str(self.arch).split("-")]
        except ValueError:
            raise ConfigError(f"bad architecture {self.arch!r}") from None

    @property
    def neuron(self) -> NeuronHyper:
        return NeuronHyper(d_v=self.voltage_decay, v_th=self.threshold, a=self.grad_window,
                           b=self.grad_amp, T=self.timesteps, t_error=self.t_error)

    @property
    def sleep_hyper(self) -> SleepHyper:
        return SleepHyper(beta=self.sleep_lr, T_sleep=self.sleep_steps,
                          p_spike=self.sleep_p_spike, batch=self.sleep_batch,
                          every=self.sleep_every)

    @property
    def precision(self) -> PrecisionSpec:
        return PrecisionSpec(self.bits, self.weight_range, self.trace_range)

    @property
    def trace_layout(self) -> str:
        if self.layout != "auto":
            return self.layout
        return "sparse" if self.bits != 32 else "factored"

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            if isinstance(val, bool):
                val = "on" if val else "off"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


_BOOL = {"on": True, "true": True, "yes": True, "1": True,
         "off": False, "false": False, "no": False, "0": False}


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    raw = raw.strip()
    try:
        if ftype == "bool":
            return _BOOL[raw.lower()]
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"malformed value for {name}: {raw!r}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then values from ``path``, then ``overrides``; validated and resolved."""
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        values.update(parse_config_text(text, str(p)))
    known = {f.name for f in fields(RunConfig)}
    for key, val in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, val) if isinstance(val, str) else val
    return RunConfig(**values).resolved()
