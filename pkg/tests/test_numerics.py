import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from interhmr.errors import DegenerateRowError, ShapeError
from interhmr.numerics import inv_sigmoid, layer_norm, masked_softmax, matmul, sigmoid


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_matmul_identity(rng):
    m = rng.normal(size=(3, 4))
    assert np.array_equal(matmul(np.eye(3), m), m)


def test_matmul_scalar():
    assert matmul([[2.0]], [[3.0]]).tolist() == [[6.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_uniform_row():
    np.testing.assert_allclose(masked_softmax(np.zeros((1, 3))), [[1 / 3] * 3], atol=1e-15)


def test_softmax_single_allowed():
    out = masked_softmax(np.array([[5.0, 5.0]]), np.array([[True, False]]))
    assert out.tolist() == [[1.0, 0.0]]


def test_softmax_direct_formula():
    e = [math.exp(x) for x in (1.0, 2.0, 3.0)]
    expected = [x / sum(e) for x in e]
    np.testing.assert_allclose(masked_softmax(np.array([[1.0, 2.0, 3.0]]))[0], expected, rtol=0, atol=1e-12)


def test_softmax_fully_masked_row_rejected():
    with pytest.raises(DegenerateRowError):
        masked_softmax(np.zeros((2, 2)), np.array([[True, False], [False, False]]))


def test_softmax_masked_entries_ignore_huge_values():
    scores = np.array([[1e308, 0.0, 1.0]])
    out = masked_softmax(scores, np.array([[False, True, True]]))
    assert out[0, 0] == 0.0 and np.isfinite(out).all()


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, (4, 6), elements=st.floats(-50, 50)),
    arrays(bool, (4, 6)),
)
def test_softmax_rows_sum_to_one(scores, mask):
    mask[:, 0] = True
    out = masked_softmax(scores, mask)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    assert (out[~mask] == 0.0).all()


def test_layer_norm_constant_row():
    out = layer_norm(np.full((1, 5), 3.0), np.ones(5), np.zeros(5))
    assert np.array_equal(out, np.zeros((1, 5)))


def test_layer_norm_already_normalized():
    np.testing.assert_allclose(layer_norm(np.array([[1.0, -1.0]]), np.ones(2), np.zeros(2), eps=0.0), [[1.0, -1.0]])


def test_layer_norm_moments(rng):
    out = layer_norm(rng.normal(3.0, 5.0, size=(1, 64)), np.ones(64), np.zeros(64))
    assert abs(out.mean()) < 1e-6
    assert abs(out.var() - 1.0) < 1e-6


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 8), elements=st.floats(-10, 10)), st.floats(-100, 100))
def test_layer_norm_shift_invariant(x, c):
    g, b = np.linspace(0.5, 2, 8), np.linspace(-1, 1, 8)
    np.testing.assert_allclose(layer_norm(x + c, g, b), layer_norm(x, g, b), atol=1e-9)


def test_layer_norm_shape_error():
    with pytest.raises(ShapeError):
        layer_norm(np.ones((2, 3)), np.ones(2), np.zeros(3))


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert inv_sigmoid(0.5) == 0.0
    assert abs(sigmoid(inv_sigmoid(0.73)) - 0.73) < 1e-9


def test_inv_sigmoid_clamps_extremes():
    assert np.isfinite(inv_sigmoid(0.0)) and np.isfinite(inv_sigmoid(1.0))
    assert inv_sigmoid(0.0) == pytest.approx(inv_sigmoid(1e-6))


@given(st.floats(-10, 10))
def test_sigmoid_round_trip(x):
    assert abs(inv_sigmoid(sigmoid(x)) - x) <= 1e-6
