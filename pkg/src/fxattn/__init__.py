"""Bit-faithful emulator of a fixed-point streaming transformer.

Subpackages cover fixed-point arithmetic (:mod:`fxattn.fxp`), dense kernels
(:mod:`fxattn.layers`), table-based softmax (:mod:`fxattn.softmax`), the
four-stage streaming attention pipeline (:mod:`fxattn.attention`), the full
flavor-tagging model (:mod:`fxattn.model`), an FPGA resource/latency cost
model (:mod:`fxattn.costmodel`), and the benchmark harness
(:mod:`fxattn.data`, :mod:`fxattn.metrics`, :mod:`fxattn.sweeps`).
"""

from fxattn.fxp import FxFormat, FxValue, Overflow, Rounding, parse_format

__all__ = ["FxFormat", "FxValue", "Overflow", "Rounding", "parse_format"]
__version__ = "0.1.0"
