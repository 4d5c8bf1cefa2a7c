import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ilstm.numerics import (
    affine,
    argmax,
    cross_entropy,
    finite_diff_grad,
    make_rng,
    mean_cross_entropy,
    one_hot,
    sigmoid,
    softmax,
    tanh_act,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


def test_sigmoid_values():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert sigmoid(np.array([math.log(3)]))[0] == pytest.approx(0.75, abs=1e-15)
    lo, hi = sigmoid(np.array([-1000.0, 1000.0]))
    assert lo == pytest.approx(0.0, abs=1e-300)
    assert hi == 1.0


@given(vectors)
def test_sigmoid_and_tanh_ranges(x):
    s = sigmoid(x)
    t = tanh_act(x)
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))
    assert np.all(np.abs(t) <= 1)


def test_tanh_values():
    assert tanh_act(np.array([0.0]))[0] == 0.0
    x = np.array([0.3, -2.0, 7.5])
    np.testing.assert_array_equal(tanh_act(x), -tanh_act(-x))
    e2 = math.exp(2.0)
    assert tanh_act(np.array([1.0]))[0] == pytest.approx((e2 - 1) / (e2 + 1), rel=1e-15)


def test_affine_values():
    v = np.array([0.5, -1.5])
    np.testing.assert_array_equal(affine(np.eye(2), v, np.zeros(2)), v)
    np.testing.assert_array_equal(affine(np.zeros((3, 2)), v, np.array([1.0, 2.0, 3.0])), [1, 2, 3])
    np.testing.assert_array_equal(affine(np.array([[1.0, 2.0], [3.0, 4.0]]), np.ones(2), np.zeros(2)), [3, 7])


def test_affine_shape_error_names_shapes():
    with pytest.raises(ValueError, match=r"W\(2, 3\).*v\(2,\)"):
        affine(np.zeros((2, 3)), np.zeros(2), np.zeros(2))


def test_affine_is_linear():
    rng = make_rng(0)
    for _ in range(10):
        W = rng.normal(size=(4, 3))
        v1, v2 = rng.normal(size=3), rng.normal(size=3)
        b1, b2 = rng.normal(size=4), rng.normal(size=4)
        a = rng.normal()
        np.testing.assert_allclose(
            affine(W, a * v1 + v2, b1 + b2), a * affine(W, v1, b1) + affine(W, v2, b2) + (1 - a) * b1, atol=1e-12
        )


def test_softmax_values():
    np.testing.assert_allclose(softmax(np.zeros(6)), np.full(6, 1 / 6), rtol=1e-15)
    np.testing.assert_allclose(softmax(np.log([1.0, 2.0, 3.0])), [1 / 6, 2 / 6, 3 / 6], rtol=1e-14)


@given(vectors, st.floats(-1e3, 1e3))
def test_softmax_is_a_distribution_and_shift_invariant(z, c):
    p = softmax(z)
    assert np.all((p >= 0) & (p <= 1))
    assert abs(p.sum() - 1.0) < 1e-9
    np.testing.assert_allclose(softmax(z + c), p, atol=1e-9)


def test_cross_entropy_values():
    assert cross_entropy(2, one_hot(2, 4)) == 0.0
    assert cross_entropy(0, np.full(6, 1 / 6)) == pytest.approx(1.79176, abs=1e-5)
    assert cross_entropy(1, np.array([0.5, 0.25, 0.25])) == pytest.approx(math.log(4), rel=1e-15)
    # zero probability hits the floor instead of producing inf
    assert cross_entropy(0, np.array([0.0, 1.0])) == pytest.approx(-math.log(1e-12))


@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-30, 30)), st.data())
def test_cross_entropy_nonnegative(z, data):
    p = softmax(z)
    j = data.draw(st.integers(0, len(z) - 1))
    loss = cross_entropy(j, p)
    assert loss >= 0
    assert (loss == 0) == (p[j] == 1.0)


def test_mean_cross_entropy_averages():
    ps = [np.array([0.5, 0.5]), np.array([0.25, 0.75])]
    assert mean_cross_entropy([0, 0], ps) == pytest.approx((math.log(2) + math.log(4)) / 2)


def test_argmax_ties_go_to_lowest_index():
    assert argmax(np.array([0.2, 0.4, 0.4])) == 1
    assert argmax(np.full(6, 1 / 6)) == 0


def test_finite_diff_known_derivatives():
    g = finite_diff_grad(lambda t: float(t[0] ** 2), np.array([3.0]), 1e-5)
    assert g[0] == pytest.approx(6.0, abs=1e-6)
    np.testing.assert_array_equal(finite_diff_grad(lambda t: 4.0, np.ones((2, 3))), np.zeros((2, 3)))


def test_finite_diff_matches_closed_form():
    theta = np.array([[0.3, -1.2], [2.0, 0.7]])
    f = lambda t: float(np.sum(np.sin(t)) + t[0, 0] * t[1, 1])  # noqa: E731
    expected = np.cos(theta)
    expected[0, 0] += theta[1, 1]
    expected[1, 1] += theta[0, 0]
    np.testing.assert_allclose(finite_diff_grad(f, theta.copy()), expected, rtol=1e-6)


def test_finite_diff_restores_params_and_rejects_nonfinite():
    theta = np.array([1.0, 2.0])
    finite_diff_grad(lambda t: float(t @ t), theta)
    np.testing.assert_array_equal(theta, [1.0, 2.0])
    with pytest.raises(FloatingPointError):
        finite_diff_grad(lambda t: float("nan"), theta)
    with pytest.raises(ValueError):
        finite_diff_grad(lambda t: 0.0, theta, eps=0)


def test_rng_reproducible():
    np.testing.assert_array_equal(make_rng(5).normal(size=10), make_rng(5).normal(size=10))
