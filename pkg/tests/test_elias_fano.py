import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pgmindex import access, encode_intercepts
from pgmindex.elias_fano import pack_bits, popcount64, select64, unpack_bits
from pgmindex.errors import InvalidSequence


@given(st.integers(0, 2 ** 64 - 1))
def test_popcount(w):
    assert popcount64(np.uint64(w)) == bin(w).count("1")


@given(st.integers(1, 2 ** 64 - 1), st.data())
def test_select(w, data):
    ones = [b for b in range(64) if w >> b & 1]
    r = data.draw(st.integers(0, len(ones) - 1))
    assert select64(np.uint64(w), r) == ones[r]


@given(st.integers(0, 63).flatmap(
    lambda w: st.tuples(st.just(w), st.lists(st.integers(0, (1 << w) - 1), max_size=200))))
def test_pack_round_trip(case):
    width, values = case
    assert unpack_bits(pack_bits(values, width), width, len(values)).tolist() == values


def test_identity_sequence():
    m = 5000
    store = encode_intercepts(np.arange(m), m)
    assert np.array_equal(store.to_array(), np.arange(m))


def test_uniform_draws_round_trip():
    rng = np.random.default_rng(0)
    values = np.sort(rng.integers(0, 10 ** 6, 1000))
    store = encode_intercepts(values, 10 ** 6)
    assert all(access(store, j) == values[j] for j in range(1000))


def test_size_example():
    rng = np.random.default_rng(1)
    values = np.sort(rng.integers(0, 10 ** 7, 10 ** 4))
    store = encode_intercepts(values, 10 ** 7)
    assert store.size_bits <= 10 ** 4 * (math.log2(10 ** 3) + 3)


@given(st.lists(st.integers(0, 10 ** 9), min_size=1, max_size=2000), st.integers(1, 10 ** 9))
def test_round_trip_and_bound(values, extra):
    values.sort()
    n = values[-1] + extra
    m = len(values)
    store = encode_intercepts(values, n)
    assert store.to_array().tolist() == values
    for j in {0, m // 2, m - 1}:
        assert store.access(j) == values[j]
    assert store.size_bits <= m * max(0, math.ceil(math.log2(n / m))) + 3 * m


@pytest.mark.parametrize("values,n", [
    ([3, 2], 10),      # decreasing
    ([0, 10], 10),     # out of range
    ([-1, 2], 10),
    ([], 10),
])
def test_invalid(values, n):
    with pytest.raises(InvalidSequence):
        encode_intercepts(values, n)


def test_access_bounds():
    store = encode_intercepts([1, 2, 3], 8)
    with pytest.raises(IndexError):
        store.access(3)
