import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dcmom.core import (DimensionError, RngStream, StatAccumulator, axpy, dot, gaussian_vec,
                        norm2, scale, stream_id, sub)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_gaussian_zero_sigma_is_zero():
    assert np.array_equal(gaussian_vec(RngStream(1), 3, 0.0), np.zeros(3))


def test_gaussian_second_moment_lln():
    v = gaussian_vec(RngStream(1), 100_000, 1.0)
    assert 0.98 <= np.mean(v**2) <= 1.02


def test_gaussian_deterministic():
    a = gaussian_vec(RngStream(5, "h"), 7, 2.0)
    b = gaussian_vec(RngStream(5, "h"), 7, 2.0)
    assert np.array_equal(a, b)


def test_gaussian_rejects_zero_dimension():
    with pytest.raises(DimensionError):
        gaussian_vec(RngStream(0), 0, 1.0)


def test_gaussian_variance_rate():
    n, sigma = 1_000_000, 1.5
    v = gaussian_vec(RngStream(3), n, sigma)
    acc = StatAccumulator()
    acc.push_many(v)
    assert abs(acc.variance - sigma**2) <= 5 * sigma**2 / math.sqrt(n)


def test_streams_differ_and_are_uncorrelated():
    a = RngStream(11, "h").normal((50_000,))
    b = RngStream(11, "g").normal((50_000,))
    c = RngStream(12, "h").normal((50_000,))
    assert not np.array_equal(a, b)
    for u, w in ((a, b), (a, c)):
        assert abs(np.corrcoef(u, w)[0, 1]) < 5 / math.sqrt(u.size)


def test_stream_name_and_hash_agree():
    assert np.array_equal(RngStream(2, "x0").normal((4,)),
                          RngStream(2, stream_id("x0")).normal((4,)))


def test_vector_ops_examples():
    assert np.array_equal(axpy(0.0, [5.0, 6.0], [1.0, 2.0]), [1.0, 2.0])
    assert np.array_equal(axpy(1.0, [1.0, 2.0], [3.0, 4.0]), [4.0, 6.0])
    assert norm2([3.0, 4.0]) == 25.0
    assert dot([1.0, 2.0], [3.0, 4.0]) == 11.0
    assert np.array_equal(scale(2.0, [1.0, -1.0]), [2.0, -2.0])
    assert np.array_equal(sub([3.0, 4.0], [1.0, 1.0]), [2.0, 3.0])


@pytest.mark.parametrize("op", [lambda x, y: axpy(1.0, x, y), dot, sub])
def test_length_mismatch(op):
    with pytest.raises(DimensionError):
        op([1.0, 2.0], [1.0, 2.0, 3.0])


@given(a=finite, x=arrays(np.float64, 5, elements=finite), y=arrays(np.float64, 5, elements=finite))
def test_axpy_matches_elementwise(a, x, y):
    out = axpy(a, x, y)
    assert np.all(np.isfinite(out))
    assert np.array_equal(out, a * x + y)


@given(x=arrays(np.float64, st.integers(1, 20), elements=finite))
def test_norm2_is_self_dot(x):
    assert norm2(x) == pytest.approx(dot(x, x), rel=1e-12)
    assert norm2(x) >= 0


@settings(max_examples=60)
@given(values=st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=200),
       split=st.integers(0, 200))
def test_accumulator_matches_two_pass(values, split):
    split = min(split, len(values))
    acc = StatAccumulator()
    for v in values[:split]:
        acc.push(v)
    acc.push_many(values[split:])
    arr = np.array(values)
    mean, var = arr.mean(), arr.var(ddof=1)
    assert acc.count == len(values)
    assert acc.mean == pytest.approx(mean, rel=1e-12, abs=1e-9)
    assert acc.variance == pytest.approx(var, rel=1e-12, abs=1e-9)


def test_accumulator_elementwise_arrays():
    data = np.random.default_rng(0).normal(size=(40, 3))
    acc = StatAccumulator()
    acc.push_many(data[:15])
    acc.push_many(data[15:])
    np.testing.assert_allclose(acc.mean, data.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(acc.stderr, data.std(axis=0, ddof=1) / math.sqrt(40), rtol=1e-12)


def test_accumulator_variance_nan_below_two():
    acc = StatAccumulator()
    acc.push(1.0)
    assert math.isnan(acc.variance)
