"""Fixed-point kernel tests against exact-rational oracles."""
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxattn import fxp
from fxattn.fxp import FxFormat, FxValue, Overflow, Rounding


# ---------------------------------------------------------------------------
# oracle: value-space arithmetic with Fractions, independent of the raw-domain
# kernels. Rounds an exact rational onto the representable grid, then applies
# overflow in value space.
# ---------------------------------------------------------------------------

def round_to_grid(x: Fraction, fmt: FxFormat) -> int:
    scaled = x * (1 << fmt.frac_bits)
    if fmt.rounding is Rounding.TRUNCATE:
        return math.floor(scaled)
    lo = math.floor(scaled)
    frac = scaled - lo
    if frac > Fraction(1, 2) or (frac == Fraction(1, 2) and lo % 2 != 0):
        return lo + 1
    return lo


def apply_overflow(raw: int, fmt: FxFormat) -> int:
    if fmt.overflow is Overflow.SATURATE:
        return min(max(raw, fmt.raw_min), fmt.raw_max)
    span = 1 << fmt.total_bits
    return (raw - fmt.raw_min) % span + fmt.raw_min


def oracle_quantize(x: Fraction, fmt: FxFormat) -> int:
    return apply_overflow(round_to_grid(x, fmt), fmt)


def oracle_add(a: FxValue, b: FxValue) -> int:
    return oracle_quantize(fxp.exact_value(a) + fxp.exact_value(b), a.fmt)


def oracle_mul(a: FxValue, b: FxValue) -> int:
    return oracle_quantize(fxp.exact_value(a) * fxp.exact_value(b), a.fmt)


def fmt_strategy(max_total=16):
    return st.builds(
        FxFormat,
        int_bits=st.integers(1, 12),
        frac_bits=st.integers(0, 12),
        overflow=st.sampled_from(list(Overflow)),
        rounding=st.sampled_from(list(Rounding)),
    ).filter(lambda f: f.total_bits <= max_total)


# ---------------------------------------------------------------------------
# format and parsing
# ---------------------------------------------------------------------------

def test_format_validation():
    with pytest.raises(ValueError):
        FxFormat(int_bits=0, frac_bits=4)
    with pytest.raises(ValueError):
        FxFormat(int_bits=4, frac_bits=-1)
    with pytest.raises(ValueError):
        FxFormat(int_bits=33, frac_bits=32)


def test_format_range():
    fmt = FxFormat(int_bits=4, frac_bits=4)
    assert fmt.min_value == -8.0
    assert fmt.max_value == 8.0 - 2.0 ** -4
    assert fmt.step == 0.0625


@pytest.mark.parametrize("text,int_bits,frac_bits", [
    ("fixed<20,10>", 10, 10),
    ("fixed<8,8>", 8, 0),
    ("fixed<32,16>", 16, 16),
])
def test_parse_format(text, int_bits, frac_bits):
    fmt = fxp.parse_format(text)
    assert (fmt.int_bits, fmt.frac_bits) == (int_bits, frac_bits)
    assert fmt.spec() == text


def test_parse_format_rejects_garbage():
    for bad in ["fixed<20>", "fix<20,10>", "fixed<10,20>", "fixed<a,b>"]:
        with pytest.raises(ValueError):
            fxp.parse_format(bad)


# ---------------------------------------------------------------------------
# quantize / dequantize
# ---------------------------------------------------------------------------

def test_quantize_exact_value():
    v = fxp.quantize(0.75, FxFormat(2, 2))
    assert v.raw == 3 and v.value == 0.75


def test_quantize_zero():
    for fmt in [FxFormat(2, 2), FxFormat(10, 10), FxFormat(1, 0)]:
        assert fxp.quantize(0.0, fmt).raw == 0


def test_quantize_tenth_round_even():
    fmt = FxFormat(10, 10, rounding=Rounding.ROUND_EVEN)
    v = fxp.quantize(0.1, fmt)
    assert v.raw == round(0.1 * 1024)
    assert v.value == round(0.1 * 1024) / 1024


def test_quantize_nan_rejected():
    with pytest.raises(ValueError):
        fxp.quantize(float("nan"), FxFormat(4, 4))


def test_quantize_saturates_out_of_range():
    fmt = FxFormat(4, 4)
    assert fxp.quantize(100.0, fmt).raw == fmt.raw_max
    assert fxp.quantize(-100.0, fmt).raw == fmt.raw_min
    assert fxp.quantize(float("inf"), fmt).raw == fmt.raw_max
    assert fxp.quantize(float("-inf"), fmt).raw == fmt.raw_min


def test_quantize_wraps_out_of_range():
    fmt = FxFormat(4, 4, overflow=Overflow.WRAP)
    x = 8.0  # raw 128, wraps to -128
    assert fxp.quantize(x, fmt).raw == -128


def test_dequantize_trivial():
    assert fxp.dequantize(FxValue(3, FxFormat(2, 2))) == 0.75
    assert fxp.dequantize(FxValue(-1024, FxFormat(10, 10))) == -1.0


def test_roundtrip_exhaustive_8bit():
    # quantize(dequantize(v)) == v for every representable 8-bit value
    for int_bits in range(1, 9):
        for rounding in Rounding:
            fmt = FxFormat(int_bits, 8 - int_bits, rounding=rounding)
            for raw in range(fmt.raw_min, fmt.raw_max + 1):
                v = FxValue(raw, fmt)
                assert fxp.quantize(fxp.dequantize(v), fmt) == v


@given(fmt=fmt_strategy(), x=st.floats(-1000, 1000))
def test_roundtrip_error_bound(fmt, x):
    x = min(max(x, fmt.min_value), fmt.max_value)
    v = fxp.quantize(x, fmt)
    assert abs(v.value - x) <= fmt.step + 1e-15


# ---------------------------------------------------------------------------
# add / mul scalar semantics
# ---------------------------------------------------------------------------

def test_add_simple():
    fmt = FxFormat(4, 4)
    a, b = fxp.quantize(0.5, fmt), fxp.quantize(0.25, fmt)
    assert fxp.fx_add(a, b).value == 0.75


def test_add_saturates_at_max():
    fmt = FxFormat(4, 4)
    top = FxValue(fmt.raw_max, fmt)
    assert fxp.fx_add(top, top).raw == fmt.raw_max


def test_mul_simple():
    fmt = FxFormat(4, 4)
    a = fxp.quantize(0.5, fmt)
    assert fxp.fx_mul(a, a).value == 0.25


def test_mul_identity():
    fmt = FxFormat(6, 6)
    one = fxp.quantize(1.0, fmt)
    for x in [-3.2, 0.015625, 1.0, 5.5]:
        v = fxp.quantize(x, fmt)
        assert fxp.fx_mul(v, one) == v


def test_format_mismatch_rejected():
    a = fxp.quantize(1.0, FxFormat(4, 4))
    b = fxp.quantize(1.0, FxFormat(4, 3))
    with pytest.raises(ValueError):
        fxp.fx_add(a, b)
    with pytest.raises(ValueError):
        fxp.fx_mul(a, b)


@given(fmt=fmt_strategy(), data=st.data())
def test_add_mul_match_oracle(fmt, data):
    a = FxValue(data.draw(st.integers(fmt.raw_min, fmt.raw_max)), fmt)
    b = FxValue(data.draw(st.integers(fmt.raw_min, fmt.raw_max)), fmt)
    assert fxp.fx_add(a, b).raw == oracle_add(a, b)
    assert fxp.fx_mul(a, b).raw == oracle_mul(a, b)
    # commutativity, bit-exact
    assert fxp.fx_add(a, b) == fxp.fx_add(b, a)
    assert fxp.fx_mul(a, b) == fxp.fx_mul(b, a)


@given(fmt=fmt_strategy(), data=st.data())
def test_sub_matches_oracle(fmt, data):
    a = FxValue(data.draw(st.integers(fmt.raw_min, fmt.raw_max)), fmt)
    b = FxValue(data.draw(st.integers(fmt.raw_min, fmt.raw_max)), fmt)
    expect = oracle_quantize(fxp.exact_value(a) - fxp.exact_value(b), fmt)
    assert fxp.fx_sub(a, b).raw == expect


def test_exhaustive_all_widths_up_to_8():
    # every raw pair at every total width <= 8, against a float-exact oracle
    # (products are dyadic rationals below 2**53, so float rounding is exact
    # value-space rounding, an independent route from the integer shifts)
    for total in range(2, 9):
        lo, hi = -(1 << (total - 1)), (1 << (total - 1))
        a = np.repeat(np.arange(lo, hi, dtype=np.int64), hi - lo)
        b = np.tile(np.arange(lo, hi, dtype=np.int64), hi - lo)
        for int_bits in range(1, total + 1):
            frac = total - int_bits
            for mode in Overflow:
                fmt = FxFormat(int_bits, frac, overflow=mode)
                want_add = a + b
                got_add = fxp.fx_add_array(fxp.FxArray(a, fmt), fxp.FxArray(b, fmt))
                if mode is Overflow.SATURATE:
                    want_add = np.clip(want_add, fmt.raw_min, fmt.raw_max)
                else:
                    want_add = np.mod(want_add - fmt.raw_min, 1 << total) + fmt.raw_min
                assert np.array_equal(got_add.raw, want_add)
                exact = (a * b).astype(np.float64) / float(1 << frac)
                for rounding in Rounding:
                    fmt_m = FxFormat(int_bits, frac, overflow=mode, rounding=rounding)
                    got = fxp.fx_mul_array(fxp.FxArray(a, fmt_m), fxp.FxArray(b, fmt_m))
                    r = np.rint(exact) if rounding is Rounding.ROUND_EVEN else np.floor(exact)
                    r = r.astype(np.int64)
                    if mode is Overflow.SATURATE:
                        r = np.clip(r, fmt_m.raw_min, fmt_m.raw_max)
                    else:
                        r = np.mod(r - fmt_m.raw_min, 1 << total) + fmt_m.raw_min
                    assert np.array_equal(got.raw, r), (total, int_bits, mode, rounding)


def test_wrap_congruence():
    # wrap-mode results are congruent to the exact result mod 2**total
    fmt = FxFormat(3, 3, overflow=Overflow.WRAP)
    span = 1 << fmt.total_bits
    for ar in range(fmt.raw_min, fmt.raw_max + 1, 3):
        for br in range(fmt.raw_min, fmt.raw_max + 1, 3):
            got = fxp.fx_add(FxValue(ar, fmt), FxValue(br, fmt)).raw
            assert (got - (ar + br)) % span == 0


# ---------------------------------------------------------------------------
# array layer equivalence with the scalar layer
# ---------------------------------------------------------------------------

@given(fmt=fmt_strategy(), xs=st.lists(st.floats(-500, 500), min_size=1, max_size=20))
def test_quantize_array_matches_scalar(fmt, xs):
    arr = fxp.quantize_array(np.array(xs), fmt)
    for got, x in zip(arr.raw.flat, xs):
        assert int(got) == fxp.quantize(x, fmt).raw


@given(fmt=fmt_strategy(), data=st.data())
def test_elementwise_arrays_match_scalar(fmt, data):
    n = data.draw(st.integers(1, 12))
    raws = st.integers(fmt.raw_min, fmt.raw_max)
    a = [data.draw(raws) for _ in range(n)]
    b = [data.draw(raws) for _ in range(n)]
    fa = fxp.FxArray(np.array(a, dtype=np.int64), fmt)
    fb = fxp.FxArray(np.array(b, dtype=np.int64), fmt)
    add = fxp.fx_add_array(fa, fb)
    mul = fxp.fx_mul_array(fa, fb)
    for i in range(n):
        va, vb = FxValue(a[i], fmt), FxValue(b[i], fmt)
        assert int(add.raw[i]) == fxp.fx_add(va, vb).raw
        assert int(mul.raw[i]) == fxp.fx_mul(va, vb).raw


@given(fmt=fmt_strategy(), data=st.data())
def test_matmul_single_rounding_oracle(fmt, data):
    rows = data.draw(st.integers(1, 4))
    cols = data.draw(st.integers(1, 4))
    raws = st.integers(fmt.raw_min, fmt.raw_max)
    m = np.array([[data.draw(raws) for _ in range(cols)] for _ in range(rows)], dtype=np.int64)
    v = np.array([data.draw(raws) for _ in range(cols)], dtype=np.int64)
    out = fxp.fx_matmul(fxp.FxArray(m, fmt), fxp.FxArray(v, fmt))
    for i in range(rows):
        exact = sum(
            Fraction(int(m[i, j]), 1 << fmt.frac_bits)
            * Fraction(int(v[j]), 1 << fmt.frac_bits)
            for j in range(cols)
        )
        assert int(out.raw[i]) == oracle_quantize(exact, fmt)


def test_matmul_wide_format_object_fallback():
    # (32,32) products cannot be accumulated in int64; result must still be exact
    fmt = FxFormat(32, 32)
    big = fmt.raw_max
    m = fxp.FxArray(np.array([[big, big]], dtype=object), fmt)
    v = fxp.FxArray(np.array([big, big], dtype=object), fmt)
    out = fxp.fx_matmul(m, v)
    exact = 2 * Fraction(big, 1 << 32) ** 2
    assert int(out.raw[0]) == oracle_quantize(exact, fmt)


def test_sum_exact_then_overflow():
    fmt = FxFormat(4, 4)
    a = fxp.FxArray(np.array([100, 100, -50], dtype=np.int64), fmt)
    # exact sum 150 > raw_max 127, saturates once at the end
    assert int(fxp.fx_sum(a).raw) == fmt.raw_max


def test_relu():
    fmt = FxFormat(4, 4)
    a = fxp.FxArray(np.array([-3, 0, 7], dtype=np.int64), fmt)
    assert list(fxp.fx_relu(a).raw) == [0, 0, 7]
