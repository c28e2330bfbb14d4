import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpirtik.fpsim import (
    FP16,
    FP32,
    FP64,
    FloatFormat,
    NonFiniteInputError,
    PrecisionTriple,
    chopped_dot,
    get_format,
    round_array,
    round_value,
    unit_roundoff,
)


def ref(x, dtype):
    with np.errstate(over="ignore"):
        return np.asarray(x).astype(dtype).astype(np.float64)


@pytest.mark.parametrize("fmt,dtype", [(FP16, np.float16), (FP32, np.float32)])
def test_matches_numpy_cast(fmt, dtype, rng):
    x = np.concatenate([
        rng.uniform(-1e5, 1e5, 20000),
        np.sign(rng.standard_normal(20000)) * 10.0 ** rng.uniform(-50, 40, 20000),
    ])
    np.testing.assert_array_equal(round_array(x, fmt), ref(x, dtype))


def test_fp16_boundaries():
    assert round_value(65504.0, FP16) == 65504.0
    assert round_value(65519.99, FP16) == 65504.0
    assert round_value(65520.0, FP16) == np.inf
    assert round_value(-65520.0, FP16) == -np.inf
    # smallest subnormal is 2^-24; exactly half of it ties to zero
    assert round_value(2.0**-25, FP16) == 0.0
    assert round_value(3 * 2.0**-25, FP16) == 2.0**-23
    assert round_value(2.0**-24, FP16) == 2.0**-24


def test_fp32_boundaries():
    mx = float(np.finfo(np.float32).max)
    assert round_value(mx, FP32) == mx
    assert round_value(2.0**-150, FP32) == 0.0
    assert round_value(3 * 2.0**-150, FP32) == 2.0**-148


def test_ties_to_even():
    assert round_value(1 + 2.0**-11, FP16) == 1.0
    assert round_value(1 + 3 * 2.0**-11, FP16) == 1 + 2.0**-9


def test_fp64_is_identity(rng):
    x = rng.standard_normal(100)
    np.testing.assert_array_equal(round_array(x, FP64), x)


def test_nan_propagates_or_raises():
    assert np.isnan(round_value(np.nan, FP16))
    with pytest.raises(NonFiniteInputError):
        round_array(np.array([1.0, np.nan]), FP16, strict=True)


def test_unit_roundoff():
    assert unit_roundoff(FP16) == 2.0**-11
    assert unit_roundoff(FP32) == 2.0**-24
    assert unit_roundoff(FP64) == 2.0**-53


def test_custom_format_without_subnormals():
    bf = FloatFormat("bf16", 8, 7, supports_subnormals=False)
    assert round_value(1 + 2.0**-8, bf) == 1.0
    assert round_value(bf.min_normal / 4, bf) == 0.0
    assert round_value(0.75 * bf.min_normal, bf) == bf.min_normal
    assert bf.max_finite == float((2 - 2.0**-7) * 2.0**127)


@pytest.mark.parametrize("e,m", [(1, 10), (5, 0), (12, 52), (11, 60)])
def test_invalid_formats(e, m):
    with pytest.raises(ValueError):
        FloatFormat("bad", e, m)


def test_get_format_lookups():
    assert get_format(3) is FP16 and get_format("2") is FP32 and get_format("fp64") is FP64
    with pytest.raises(KeyError):
        get_format(4)
    with pytest.raises(KeyError):
        get_format("fp8")


def test_triple_shorthand_and_order():
    t = PrecisionTriple.from_spec("(3,2,1)")
    assert (t.pr1, t.pr2, t.pr3) == (FP16, FP32, FP64)
    assert t.label == "(3,2,1)"
    assert PrecisionTriple.from_spec("fp16, fp16, fp32") == PrecisionTriple(FP16, FP16, FP32)
    with pytest.raises(ValueError):
        PrecisionTriple.from_spec((1, 2, 3))
    with pytest.raises(ValueError):
        PrecisionTriple.from_spec((1, 1))


def test_chopped_dot_stagnates_in_fp16():
    # 1 + 2^-11 rounds back to 1 in fp16, so the running sum stops at 1
    s = chopped_dot(np.ones(4096), np.full(4096, 2.0**-11), FP16)
    assert s == 1.0
    assert chopped_dot(np.ones(4096), np.full(4096, 2.0**-11), FP64) == 2.0


def test_chopped_dot_fp64_matches_sequential_sum(rng):
    a, b = rng.standard_normal(50), rng.standard_normal(50)
    acc = 0.0
    for x, y in zip(a, b):
        acc += x * y
    assert chopped_dot(a, b, FP64) == acc


finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-6e4, max_value=6e4)


@settings(max_examples=300, deadline=None)
@given(finite)
def test_idempotent(x):
    y = round_value(x, FP16)
    assert round_value(y, FP16) == y


@settings(max_examples=300, deadline=None)
@given(finite, finite)
def test_monotone(x, y):
    lo, hi = min(x, y), max(x, y)
    assert round_value(lo, FP16) <= round_value(hi, FP16)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=FP16.min_normal, max_value=FP16.max_finite))
def test_relative_error_bound(x):
    assert abs(round_value(x, FP16) - x) <= unit_roundoff(FP16) * abs(x)


def _fp16_loop(a, b):
    acc = np.float16(0)
    for x, y in zip(a, b):
        acc = np.float16(acc + np.float16(np.float16(x) * np.float16(y)))
    return float(acc)


def test_chopped_dot_matches_float16_loop(rng):
    a, b = rng.uniform(-2, 2, 300), rng.uniform(-2, 2, 300)
    assert chopped_dot(a, b, FP16) == _fp16_loop(a, b)
    s = chopped_dot(np.ones(2048), np.full(2048, 2.0**-11), FP16)
    assert s < 2 and s == _fp16_loop(np.ones(2048), np.full(2048, 2.0**-11))
    assert chopped_dot([1, 0], [0, 1], FP16) == 0.0
