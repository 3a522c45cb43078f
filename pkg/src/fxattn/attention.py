"""Four-stage streaming multi-head attention with FIFO inter-stage channels.

Stage 1 projects each incoming row into per-head Q/K/V rows and pushes
them onto FIFO channels. Stage 2 preloads the full K block into a register
file, scores one Q row at a time against it (the 1/sqrt(d_k) divisor is a
precomputed fixed-point multiplicative constant, never a runtime divide)
and applies the table softmax row-wise. Stage 3 buffers V into a
dual-access register and forms the score-weighted row combinations.
Stage 4 concatenates the per-head rows in head order and applies the
output projection, one row in and one row out per step.

Streaming is emulated functionally: stages run to completion in sequence,
each draining the bounded channels the previous one filled. Determinism
and bit-exactness are the point; simulated timing lives in the cost model.
``run_mha_reference`` performs the identical arithmetic over whole
matrices in the same evaluation order, so streaming and reference outputs
are equal bit for bit in both float and fixed modes (the pipeline's
defining correctness property). ``mha_forward_batch`` is the multi-sample
fast path used by the model; in fixed mode it too is bit-exact.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fxattn import fxp
from fxattn.fxp import FxArray, FxFormat
from fxattn.softmax import SoftmaxConfig, softmax_exact, softmax_lut

Tensor = np.ndarray | FxArray

# score a masked-out position receives before softmax in float mode
_FLOAT_MASK_SCORE = -1e30


class ChannelError(RuntimeError):
    """FIFO misuse: overflow, underflow, or wrong row accounting."""


class StreamChannel:
    """Bounded FIFO of row vectors; every write and read is counted."""

    def __init__(self, capacity: int, name: str = "chan"):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.name = name
        self._rows: deque = deque()
        self.writes = 0
        self.reads = 0

    def write(self, row) -> None:
        if len(self._rows) >= self.capacity:
            raise ChannelError(f"{self.name}: overflow past capacity {self.capacity}")
        self._rows.append(row)
        self.writes += 1

    def read(self):
        if not self._rows:
            raise ChannelError(f"{self.name}: read past written count")
        self.reads += 1
        return self._rows.popleft()

    @property
    def pending(self) -> int:
        return len(self._rows)

    def check_completed(self, expected: int) -> None:
        if self.writes != expected or self.reads != expected:
            raise ChannelError(
                f"{self.name}: expected {expected} writes/reads, "
                f"saw {self.writes}/{self.reads}"
            )


@dataclass(frozen=True)
class MhaConfig:
    """Attention geometry. d_k/d_v default to d_model // num_heads."""

    d_model: int
    num_heads: int
    seq_len: int
    d_k: int | None = None
    d_v: int | None = None

    def __post_init__(self) -> None:
        if self.d_model < 1 or self.num_heads < 1 or self.seq_len < 1:
            raise ValueError("d_model, num_heads and seq_len must be positive")
        if self.d_k is None:
            if self.d_model % self.num_heads:
                raise ValueError(
                    f"d_model {self.d_model} not divisible by {self.num_heads} heads; "
                    "pass d_k explicitly"
                )
            object.__setattr__(self, "d_k", self.d_model // self.num_heads)
        if self.d_v is None:
            object.__setattr__(self, "d_v", self.d_k)
        if self.d_k < 1 or self.d_v < 1:
            raise ValueError("d_k and d_v must be positive")

    @property
    def concat_dim(self) -> int:
        return self.num_heads * self.d_v


@dataclass
class MhaWeights:
    """Per-head projections plus the output projection.

    Shapes: w_q/w_k (heads, d_k, d_model), w_v (heads, d_v, d_model),
    matching biases, w_o (d_model, heads*d_v), b_o (d_model,).
    """

    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor

    def validate(self, cfg: MhaConfig) -> None:
        expect = {
            "w_q": (cfg.num_heads, cfg.d_k, cfg.d_model),
            "b_q": (cfg.num_heads, cfg.d_k),
            "w_k": (cfg.num_heads, cfg.d_k, cfg.d_model),
            "b_k": (cfg.num_heads, cfg.d_k),
            "w_v": (cfg.num_heads, cfg.d_v, cfg.d_model),
            "b_v": (cfg.num_heads, cfg.d_v),
            "w_o": (cfg.d_model, cfg.concat_dim),
            "b_o": (cfg.d_model,),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if tuple(got) != shape:
                raise ValueError(f"{name}: expected shape {shape}, found {tuple(got)}")


def random_mha_weights(cfg: MhaConfig, rng: np.random.Generator,
                       scale: float = 1.0) -> MhaWeights:
    def mat(*shape):
        return rng.normal(0.0, scale / math.sqrt(shape[-1]), size=shape)

    return MhaWeights(
        w_q=mat(cfg.num_heads, cfg.d_k, cfg.d_model),
        b_q=rng.normal(0.0, 0.05, size=(cfg.num_heads, cfg.d_k)),
        w_k=mat(cfg.num_heads, cfg.d_k, cfg.d_model),
        b_k=rng.normal(0.0, 0.05, size=(cfg.num_heads, cfg.d_k)),
        w_v=mat(cfg.num_heads, cfg.d_v, cfg.d_model),
        b_v=rng.normal(0.0, 0.05, size=(cfg.num_heads, cfg.d_v)),
        w_o=mat(cfg.d_model, cfg.concat_dim),
        b_o=rng.normal(0.0, 0.05, size=(cfg.d_model,)),
    )


def quantize_mha_weights(w: MhaWeights, fmt: FxFormat) -> MhaWeights:
    q = fxp.quantize_array
    return MhaWeights(
        w_q=q(w.w_q, fmt), b_q=q(w.b_q, fmt),
        w_k=q(w.w_k, fmt), b_k=q(w.b_k, fmt),
        w_v=q(w.w_v, fmt), b_v=q(w.b_v, fmt),
        w_o=q(w.w_o, fmt), b_o=q(w.b_o, fmt),
    )


# ---------------------------------------------------------------------------
# number-mode helpers shared by the streaming, reference and batch paths
# ---------------------------------------------------------------------------

def _is_fixed(x) -> bool:
    return isinstance(x, FxArray)


def _rows(x: Tensor) -> list:
    if _is_fixed(x):
        return [FxArray(x.raw[t], x.fmt) for t in range(x.shape[0])]
    return [x[t] for t in range(x.shape[0])]


def _stack(rows: Sequence) -> Tensor:
    if _is_fixed(rows[0]):
        return FxArray(np.stack([r.raw for r in rows]), rows[0].fmt)
    return np.stack(rows)


def _concat(rows: Sequence) -> Tensor:
    if _is_fixed(rows[0]):
        return FxArray(np.concatenate([r.raw for r in rows]), rows[0].fmt)
    return np.concatenate(rows)


def _head(x: Tensor, h: int) -> Tensor:
    return FxArray(x.raw[h], x.fmt) if _is_fixed(x) else x[h]


def _matvec_bias(w: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """W x then bias: one rounded dot product per element, bias added exactly."""
    if _is_fixed(x):
        return fxp.fx_add_array(fxp.fx_matmul(w, x), b)
    return w @ x + b


def score_scale(cfg: MhaConfig, fmt: FxFormat | None):
    """1/sqrt(d_k) as a multiplicative constant, quantized in fixed mode."""
    inv = 1.0 / math.sqrt(cfg.d_k)
    if fmt is None:
        return inv
    raw = fxp.quantize(inv, fmt).raw
    dtype = object if fmt.total_bits > 60 else np.int64
    return FxArray(np.array(raw, dtype=dtype), fmt)


def _score_row(q_row: Tensor, k_block: Tensor, scale) -> Tensor:
    """Dot q against every preloaded K row, then apply the scale constant."""
    if _is_fixed(q_row):
        dots = fxp.fx_matmul(k_block, q_row)
        return fxp.fx_mul_array(dots, scale)
    return (k_block @ q_row) * scale


def _apply_mask_row(s_row: Tensor, mask: np.ndarray) -> Tensor:
    if _is_fixed(s_row):
        raw = s_row.raw.copy()
        raw[~mask] = s_row.fmt.raw_min
        return FxArray(raw, s_row.fmt)
    out = s_row.copy()
    out[~mask] = _FLOAT_MASK_SCORE
    return out


def _softmax_row(s_row: Tensor, softmax_cfg: SoftmaxConfig | None) -> Tensor:
    if _is_fixed(s_row):
        if softmax_cfg is None:
            raise ValueError("fixed-mode attention requires a SoftmaxConfig")
        return softmax_lut(softmax_cfg, s_row)
    return softmax_exact(s_row)


def _weighted_sum_row(s_row: Tensor, v_block: Tensor) -> Tensor:
    """out[d] = sum_j s[j] * V[j, d] (column-wise reads of the V register)."""
    if _is_fixed(s_row):
        return fxp.fx_matmul(s_row, v_block)
    return s_row @ v_block


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def stage1_project(cfg: MhaConfig, weights: MhaWeights, in_ch: StreamChannel):
    """Project seq_len input rows into per-head Q/K/V streams, in input order."""
    if in_ch.pending != cfg.seq_len:
        raise ValueError(f"expected {cfg.seq_len} input rows, found {in_ch.pending}")
    q_chs = [StreamChannel(cfg.seq_len, f"q[{h}]") for h in range(cfg.num_heads)]
    k_chs = [StreamChannel(cfg.seq_len, f"k[{h}]") for h in range(cfg.num_heads)]
    v_chs = [StreamChannel(cfg.seq_len, f"v[{h}]") for h in range(cfg.num_heads)]
    for _ in range(cfg.seq_len):
        x = in_ch.read()
        for h in range(cfg.num_heads):
            q_chs[h].write(_matvec_bias(_head(weights.w_q, h), _head(weights.b_q, h), x))
            k_chs[h].write(_matvec_bias(_head(weights.w_k, h), _head(weights.b_k, h), x))
            v_chs[h].write(_matvec_bias(_head(weights.w_v, h), _head(weights.b_v, h), x))
    return q_chs, k_chs, v_chs


def stage2_scores(cfg: MhaConfig, softmax_cfg: SoftmaxConfig | None,
                  q_ch: StreamChannel, k_ch: StreamChannel,
                  scale=None, mask: np.ndarray | None = None) -> StreamChannel:
    """Score rows: softmax((q . k_j) * c) with K preloaded into a register block."""
    if q_ch.pending != cfg.seq_len or k_ch.pending != cfg.seq_len:
        raise ValueError(
            f"stream length mismatch: q={q_ch.pending}, k={k_ch.pending}, "
            f"expected {cfg.seq_len}"
        )
    if scale is None:
        first = q_ch._rows[0]
        scale = score_scale(cfg, first.fmt if _is_fixed(first) else None)
    # the whole K matrix is registered before any scoring starts
    k_block = _stack([k_ch.read() for _ in range(cfg.seq_len)])
    out = StreamChannel(cfg.seq_len, "scores")
    for _ in range(cfg.seq_len):
        q_row = q_ch.read()
        s_row = _score_row(q_row, k_block, scale)
        if mask is not None:
            s_row = _apply_mask_row(s_row, mask)
        out.write(_softmax_row(s_row, softmax_cfg))
    return out


def stage3_apply(cfg: MhaConfig, score_ch: StreamChannel,
                 v_ch: StreamChannel) -> StreamChannel:
    """out_t = sum_j score[t, j] * v_j with V buffered for dual (row/column) access."""
    if score_ch.pending != cfg.seq_len or v_ch.pending != cfg.seq_len:
        raise ValueError(
            f"stream length mismatch: scores={score_ch.pending}, v={v_ch.pending}, "
            f"expected {cfg.seq_len}"
        )
    v_block = _stack([v_ch.read() for _ in range(cfg.seq_len)])
    out = StreamChannel(cfg.seq_len, "head_out")
    for _ in range(cfg.seq_len):
        out.write(_weighted_sum_row(score_ch.read(), v_block))
    return out


def stage4_concat_project(cfg: MhaConfig, weights: MhaWeights,
                          head_chs: Sequence[StreamChannel]) -> StreamChannel:
    """Concatenate head rows in head order and project; one row at a time."""
    if len(head_chs) != cfg.num_heads:
        raise ValueError(f"expected {cfg.num_heads} head streams, got {len(head_chs)}")
    for ch in head_chs:
        if ch.pending != cfg.seq_len:
            raise ValueError(
                f"{ch.name}: {ch.pending} rows pending, expected {cfg.seq_len}"
            )
    out = StreamChannel(cfg.seq_len, "mha_out")
    for _ in range(cfg.seq_len):
        merged = _concat([ch.read() for ch in head_chs])
        out.write(_matvec_bias(weights.w_o, weights.b_o, merged))
    return out


def run_mha_streaming(cfg: MhaConfig, weights: MhaWeights,
                      softmax_cfg: SoftmaxConfig | None, x: Tensor,
                      mask: np.ndarray | None = None) -> Tensor:
    """Full pipeline: stage4 . stage3 . stage2 . stage1 over FIFO channels."""
    weights.validate(cfg)
    if tuple(x.shape) != (cfg.seq_len, cfg.d_model):
        raise ValueError(
            f"input shape {tuple(x.shape)} != ({cfg.seq_len}, {cfg.d_model})"
        )
    in_ch = StreamChannel(cfg.seq_len, "input")
    for row in _rows(x):
        in_ch.write(row)

    q_chs, k_chs, v_chs = stage1_project(cfg, weights, in_ch)
    scale = score_scale(cfg, x.fmt if _is_fixed(x) else None)
    score_chs, head_chs = [], []
    for h in range(cfg.num_heads):
        s_ch = stage2_scores(cfg, softmax_cfg, q_chs[h], k_chs[h], scale, mask)
        score_chs.append(s_ch)
        head_chs.append(stage3_apply(cfg, s_ch, v_chs[h]))
    out_ch = stage4_concat_project(cfg, weights, head_chs)

    result = _stack([out_ch.read() for _ in range(cfg.seq_len)])
    for ch in [in_ch, *q_chs, *k_chs, *v_chs, *score_chs, *head_chs, out_ch]:
        ch.check_completed(cfg.seq_len)
    return result


def run_mha_reference(cfg: MhaConfig, weights: MhaWeights,
                      softmax_cfg: SoftmaxConfig | None, x: Tensor,
                      mask: np.ndarray | None = None) -> Tensor:
    """Whole-matrix oracle: softmax(Q K^T * c) V per head, concat, project.

    Uses the same row kernels in the same evaluation order as the streaming
    pipeline, so results are bit-exact equal in every number mode.
    """
    weights.validate(cfg)
    if tuple(x.shape) != (cfg.seq_len, cfg.d_model):
        raise ValueError(
            f"input shape {tuple(x.shape)} != ({cfg.seq_len}, {cfg.d_model})"
        )
    rows = _rows(x)
    scale = score_scale(cfg, x.fmt if _is_fixed(x) else None)
    head_blocks = []
    for h in range(cfg.num_heads):
        q = _stack([_matvec_bias(_head(weights.w_q, h), _head(weights.b_q, h), r)
                    for r in rows])
        k = _stack([_matvec_bias(_head(weights.w_k, h), _head(weights.b_k, h), r)
                    for r in rows])
        v = _stack([_matvec_bias(_head(weights.w_v, h), _head(weights.b_v, h), r)
                    for r in rows])
        s_rows = []
        for t in range(cfg.seq_len):
            s_row = _score_row(_rows(q)[t], k, scale)
            if mask is not None:
                s_row = _apply_mask_row(s_row, mask)
            s_rows.append(_softmax_row(s_row, softmax_cfg))
        head_blocks.append(_stack([_weighted_sum_row(s, v) for s in s_rows]))
    out_rows = []
    for t in range(cfg.seq_len):
        merged = _concat([_rows(block)[t] for block in head_blocks])
        out_rows.append(_matvec_bias(weights.w_o, weights.b_o, merged))
    return _stack(out_rows)


# ---------------------------------------------------------------------------
# batched fast path (used by the model for dataset-scale inference)
# ---------------------------------------------------------------------------

def _t(w: Tensor) -> Tensor:
    return FxArray(np.swapaxes(w.raw, -1, -2), w.fmt) if _is_fixed(w) \
        else np.swapaxes(w, -1, -2)


def _mm(a: Tensor, b: Tensor) -> Tensor:
    return fxp.fx_matmul(a, b) if _is_fixed(a) else a @ b


def _add(a: Tensor, b: Tensor) -> Tensor:
    return fxp.fx_add_array(a, b) if _is_fixed(a) else a + b


def mha_forward_batch(cfg: MhaConfig, weights: MhaWeights,
                      softmax_cfg: SoftmaxConfig | None, x: Tensor,
                      mask: np.ndarray | None = None) -> Tensor:
    """Attention over a batch (n, seq_len, d_model); bit-exact to the
    reference in fixed mode (integer accumulation is order-free)."""
    weights.validate(cfg)
    if x.ndim != 3 or tuple(x.shape[1:]) != (cfg.seq_len, cfg.d_model):
        raise ValueError(
            f"batch shape {tuple(x.shape)} != (n, {cfg.seq_len}, {cfg.d_model})"
        )
    fixed = _is_fixed(x)
    scale = score_scale(cfg, x.fmt if fixed else None)
    heads = []
    for h in range(cfg.num_heads):
        q = _add(_mm(x, _t(_head(weights.w_q, h))), _head(weights.b_q, h))
        k = _add(_mm(x, _t(_head(weights.w_k, h))), _head(weights.b_k, h))
        v = _add(_mm(x, _t(_head(weights.w_v, h))), _head(weights.b_v, h))
        dots = _mm(q, _t(k))
        if fixed:
            scores = fxp.fx_mul_array(dots, scale)
        else:
            scores = dots * scale
        if mask is not None:
            if fixed:
                raw = scores.raw.copy()
                raw[..., ~mask] = scores.fmt.raw_min
                scores = FxArray(raw, scores.fmt)
            else:
                scores = scores.copy()
                scores[..., ~mask] = _FLOAT_MASK_SCORE
        probs = _softmax_row(scores, softmax_cfg)
        heads.append(_mm(probs, v))
    if fixed:
        merged = FxArray(np.concatenate([b.raw for b in heads], axis=-1), x.fmt)
    else:
        merged = np.concatenate(heads, axis=-1)
    return _add(_mm(merged, _t(weights.w_o)), weights.b_o)
