import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssvq.core import as_weight_matrix, partition, reassemble, rng_for
from ssvq.errors import NonDivisibleDimension, ShapeMismatch


def test_partition_row_major():
    W = np.arange(8.0).reshape(2, 4)
    assert np.array_equal(partition(W, 2), [[0, 1], [2, 3], [4, 5], [6, 7]])
    # a subvector may straddle rows
    assert np.array_equal(partition(np.arange(6.0).reshape(2, 3), 2), [[0, 1], [2, 3], [4, 5]])


def test_partition_copies():
    W = np.zeros((2, 2))
    P = partition(W, 2)
    P[0, 0] = 5
    assert W[0, 0] == 0


def test_partition_rejects_bad_d():
    with pytest.raises(NonDivisibleDimension):
        partition(np.zeros((3, 3)), 2)
    with pytest.raises(NonDivisibleDimension):
        partition(np.zeros((3, 3)), 0)


def test_reassemble_shape_check():
    with pytest.raises(ShapeMismatch):
        reassemble(np.zeros((3, 2)), 2, 2)


def test_weight_matrix_validation():
    with pytest.raises(ShapeMismatch):
        as_weight_matrix(np.zeros(4))
    with pytest.raises(ValueError):
        as_weight_matrix([[1.0, np.nan]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 2, 3, 4]), st.data())
def test_partition_roundtrip(O, I, d, data):
    if (O * I) % d:
        return
    W = data.draw(arrays(np.float64, (O, I), elements=st.floats(-1e6, 1e6)))
    P = partition(W, d)
    assert P.shape == (O * I // d, d)
    assert np.array_equal(reassemble(P, O, I), W)


def test_rng_streams_are_reproducible_and_distinct():
    a = rng_for(3, "data").random(4)
    assert np.array_equal(a, rng_for(3, "data").random(4))
    assert not np.array_equal(a, rng_for(3, "init").random(4))
    assert not np.array_equal(a, rng_for(4, "data").random(4))
