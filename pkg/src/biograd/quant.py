"""Deterministic fixed-point rounding of weights and traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ALLOWED_BITS = (8, 16, 32)


@dataclass(frozen=True)
class PrecisionSpec:
    bits: int = 32
    weight_range: float = 1.0
    trace_range: float = 8.0

    def __post_init__(self):
        if self.bits not in ALLOWED_BITS:
            raise ConfigError(f"bits must be one of {ALLOWED_BITS}, got {self.bits}")
        if self.weight_range <= 0 or self.trace_range <= 0:
            raise ConfigError("quantization ranges must be positive")

    @property
    def active(self) -> bool:
        return self.bits != 32


def grid_step(bits: int, range_max: float) -> float:
    return range_max / 2 ** (bits - 1)


def quantize(x, bits: int, range_max: float):
    """Round to the symmetric grid ``k * range_max / 2**(bits-1)``.

    ``|k| <= 2**(bits-1) - 1``; ties go to the even grid index. ``bits == 32``
    returns the input untouched.
    """
    if bits == 32:
        return x
    step = grid_step(bits, range_max)
    top = 2 ** (bits - 1) - 1
    return np.clip(np.rint(np.asarray(x) / step), -top, top) * step


def on_grid(x, bits: int, range_max: float) -> bool:
    """True when every entry of ``x`` is a representable grid value."""
    if bits == 32:
        return True
    k = np.asarray(x) / grid_step(bits, range_max)
    top = 2 ** (bits - 1) - 1
    return bool(np.all(k == np.rint(k)) and np.all(np.abs(k) <= top))


def quantize_after_update(params, traces, spec: PrecisionSpec):
    """Snap W, the learned B and every per-synapse trace in ``traces`` in place.

    The output layer's identity feedback is fixed wiring and stays exact.
    """
    if not spec.active:
        return params, traces
    params.W = [quantize(w, spec.bits, spec.weight_range).astype(w.dtype) for w in params.W]
    params.B = [quantize(b, spec.bits, spec.weight_range).astype(b.dtype)
                for b in params.B[:-1]] + [params.B[-1]]
    for tr in traces:
        for name in ("tr_pre", "tr_corr", "_pre", "_corr"):
            if hasattr(tr, name):
                setattr(tr, name, quantize(getattr(tr, name), spec.bits, spec.trace_range))
    return params, traces
