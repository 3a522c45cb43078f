"""Softmax without runtime transcendentals: one exp table, one reciprocal table.

The fixed-point path mirrors the hardware strategy. Inputs are shifted so
the row maximum lands at 0, every shifted element indexes an exp table over
[exp_lo, 0), the exact sum of the looked-up terms indexes a reciprocal table
over [1, n_max), and each output is a single fixed-point multiply of the two
table entries. Out-of-range lookups clamp to the edge bins; nothing wraps.

Table entries are sampled at bin left edges and quantized into the I/O
format, so tables are immutable integer arrays after construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from fxattn import fxp
from fxattn.fxp import FxArray, FxFormat


@dataclass(frozen=True)
class LutTable:
    """Uniform lookup table over [lo, hi): entries[k] = quantize(f(lo + k*width))."""

    lo: float
    hi: float
    entries_raw: np.ndarray  # int64 raws in `fmt`
    fmt: FxFormat

    @property
    def size(self) -> int:
        return int(self.entries_raw.shape[0])

    def index_of(self, x: np.ndarray | float) -> np.ndarray:
        """clamp(floor((x - lo) * size / (hi - lo)), 0, size - 1)"""
        i = np.floor((np.asarray(x, dtype=np.float64) - self.lo) * self.size / (self.hi - self.lo))
        return np.clip(i, 0, self.size - 1).astype(np.int64)

    def lookup_raw(self, x: np.ndarray | float) -> np.ndarray:
        return self.entries_raw[self.index_of(x)]


def _build_table(f: Callable[[np.ndarray], np.ndarray], size: int,
                 lo: float, hi: float, fmt: FxFormat) -> LutTable:
    if size < 1 or (size & (size - 1)) != 0:
        raise ValueError(f"table size must be a power of two, got {size}")
    if not lo < hi:
        raise ValueError(f"invalid table range [{lo}, {hi})")
    edges = lo + np.arange(size, dtype=np.float64) * (hi - lo) / size
    entries = fxp.quantize_array(f(edges), fmt)
    return LutTable(lo=lo, hi=hi, entries_raw=np.asarray(entries.raw), fmt=fmt)


def build_exp_table(size: int, lo: float, hi: float, fmt: FxFormat) -> LutTable:
    return _build_table(np.exp, size, lo, hi, fmt)


def build_inv_table(size: int, lo: float, hi: float, fmt: FxFormat) -> LutTable:
    if lo <= 0.0:
        raise ValueError(f"reciprocal table range must start above zero, got lo={lo}")
    return _build_table(lambda x: 1.0 / x, size, lo, hi, fmt)


@dataclass(frozen=True)
class SoftmaxConfig:
    exp_table: LutTable
    inv_table: LutTable
    io_format: FxFormat


def make_softmax_config(fmt: FxFormat, n_max: float, table_size: int = 1024,
                        exp_lo: float = -8.0) -> SoftmaxConfig:
    """Tables for vectors of length < n_max; after max-subtraction the exp sum
    lies in [1, n], hence the reciprocal domain [1, n_max)."""
    return SoftmaxConfig(
        exp_table=build_exp_table(table_size, exp_lo, 0.0, fmt),
        inv_table=build_inv_table(table_size, 1.0, float(n_max), fmt),
        io_format=fmt,
    )


def softmax_lut(cfg: SoftmaxConfig, v: FxArray) -> FxArray:
    """Table-based softmax along the last axis (batched shapes welcome)."""
    if v.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    fmt = cfg.io_format
    if v.fmt != fmt:
        raise ValueError(f"input format {v.fmt.spec()} != table format {fmt.spec()}")
    raw = v.raw
    if raw.dtype == object:
        raw = raw.astype(np.int64) if fmt.total_bits <= 60 else raw
    # shift the row maximum to zero; the difference is overflow-handled in
    # the I/O format (saturation just pins far-below-range inputs, which the
    # exp table clamps to its bottom bin anyway)
    m = raw.max(axis=-1, keepdims=True)
    shifted = fxp._handle_overflow_array(raw - m, fmt)
    x = np.asarray(shifted, dtype=np.float64) * fmt.step
    e = FxArray(cfg.exp_table.lookup_raw(x), fmt)
    s = fxp.fx_sum(e, axis=-1)
    s_val = np.asarray(s.raw, dtype=np.float64) * fmt.step
    inv_raw = cfg.inv_table.lookup_raw(s_val)
    inv = FxArray(np.expand_dims(np.asarray(inv_raw), -1), fmt)
    return fxp.fx_mul_array(e, inv)


def softmax_exact(v: np.ndarray) -> np.ndarray:
    """Numerically stable float softmax along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
