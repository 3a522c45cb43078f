"""Dense linear-algebra kernels generic over float64 and fixed-point tensors.

Both number representations share the same call surface: float tensors are
plain ``np.ndarray`` (float64), fixed-point tensors are :class:`fxp.FxArray`.
Fixed-mode dot products accumulate exactly and round once per output element
(see :func:`fxp.fx_matmul`); the bias is then added as an exact raw addition
with overflow handling.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from fxattn import fxp
from fxattn.fxp import FxArray

Tensor = np.ndarray | FxArray


class Activation(enum.Enum):
    NONE = "none"
    RELU = "relu"
    SOFTMAX = "softmax"


@dataclass
class DenseLayer:
    """Fully connected layer: ``weights`` is (out, in), ``bias`` is (out,)."""

    weights: Tensor
    bias: Tensor
    activation: Activation = Activation.NONE

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be 2-D and bias 1-D")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} != output rows {self.weights.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def is_fixed(x: Tensor) -> bool:
    return isinstance(x, FxArray)


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """out[i] = sum_j m[i, j] * v[j], with one final rounding per element in fixed mode."""
    if m.ndim != 2 or v.ndim != 1:
        raise ValueError(f"matvec expects (out, in) x (in,), got {m.shape} x {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    if is_fixed(m) != is_fixed(v):
        raise TypeError("mixed float/fixed operands")
    if is_fixed(m):
        return fxp.fx_matmul(m, v)
    return m @ v


def add(a: Tensor, b: Tensor) -> Tensor:
    if is_fixed(a):
        return fxp.fx_add_array(a, b)
    return a + b


def relu(x: Tensor) -> Tensor:
    if is_fixed(x):
        return fxp.fx_relu(x)
    return np.maximum(x, 0.0)


def dense_forward(layer: DenseLayer, v: Tensor, softmax_cfg=None) -> Tensor:
    """activation(W v + b). Softmax needs a table config in fixed mode."""
    pre = add(matvec(layer.weights, v), layer.bias)
    if layer.activation is Activation.NONE:
        return pre
    if layer.activation is Activation.RELU:
        return relu(pre)
    # softmax: table-based in fixed mode, exact in float mode
    from fxattn import softmax as _softmax

    if is_fixed(pre):
        if softmax_cfg is None:
            raise ValueError("fixed-mode softmax requires a SoftmaxConfig")
        return _softmax.softmax_lut(softmax_cfg, pre)
    return _softmax.softmax_exact(pre)


def flatten(x: Tensor) -> Tensor:
    """Row-major concatenation of a (rows, cols) tensor into one vector."""
    if is_fixed(x):
        return FxArray(np.ascontiguousarray(x.raw).reshape(-1), x.fmt)
    return np.ascontiguousarray(x).reshape(-1)


def unflatten(v: Tensor, rows: int, cols: int) -> Tensor:
    if is_fixed(v):
        return FxArray(v.raw.reshape(rows, cols), v.fmt)
    return np.asarray(v).reshape(rows, cols)


def quantize_dense(layer: DenseLayer, fmt: fxp.FxFormat) -> DenseLayer:
    """Quantize a float layer's parameters once for a given format."""
    return DenseLayer(
        weights=fxp.quantize_array(layer.weights, fmt),
        bias=fxp.quantize_array(layer.bias, fmt),
        activation=layer.activation,
    )
