import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shiftlab.numerics import (
    OptimState,
    RngStream,
    cross_entropy,
    entropy,
    finite_diff_grad,
    log_softmax,
    logsumexp,
    one_hot,
    relative_error,
    sgd_step,
    softmax,
)

finite = st.floats(-50, 50, allow_nan=False)
logit_vecs = arrays(np.float64, st.integers(1, 8), elements=finite)


def test_softmax_trivial():
    assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    assert np.allclose(softmax([1000.0, 1000.0]), [0.5, 0.5])


def test_softmax_matches_extended_precision():
    mpmath.mp.dps = 50
    e = [mpmath.exp(v) for v in (1, 2, 3)]
    ref = np.array([float(v / sum(e)) for v in e])
    assert np.max(np.abs(softmax([1.0, 2.0, 3.0]) - ref)) <= 1e-15


@given(logit_vecs, st.floats(-1e3, 1e3))
def test_softmax_shift_invariance(z, c):
    assert np.max(np.abs(softmax(z + c) - softmax(z))) <= 1e-12


@given(logit_vecs)
def test_log_softmax_consistent(z):
    assert np.allclose(np.exp(log_softmax(z)), softmax(z), atol=1e-12)
    assert np.isclose(logsumexp(z), np.log(np.exp(z - z.max()).sum()) + z.max())


def test_entropy_examples():
    assert entropy([0.0, 1.0, 0.0]) == 0.0
    assert np.isclose(entropy(np.full(4, 0.25)), np.log(4))
    assert np.isclose(entropy([0.3, 0.7]), -(0.3 * np.log(0.3) + 0.7 * np.log(0.7)))


@given(logit_vecs)
def test_entropy_bounds(z):
    p = softmax(z)
    h = entropy(p)
    assert -1e-12 <= h <= np.log(len(p)) + 1e-12


def test_entropy_rejects_invalid():
    with pytest.raises(ValueError):
        entropy([0.5, 0.6])
    with pytest.raises(ValueError):
        entropy([-0.1, 1.1])


def test_cross_entropy_examples():
    assert cross_entropy([0.0, 1.0], 1) == 0.0
    assert np.isclose(cross_entropy(np.full(5, 0.2), 3), np.log(5))
    assert np.isclose(cross_entropy([0.2, 0.8], 0), -np.log(0.2))
    with pytest.raises((ValueError, IndexError)):
        cross_entropy([0.2, 0.8], 2)


def test_one_hot():
    assert np.array_equal(one_hot([2, 0], 3), [[0, 0, 1], [1, 0, 0]])


def test_sgd_plain_step():
    out = sgd_step({"w": np.array([1.0, 2.0])}, {"w": np.array([0.5, -1.0])}, OptimState(1.0, 0.0))
    assert np.allclose(out["w"], [0.5, 3.0])


def test_sgd_zero_grad_keeps_params():
    p = np.array([3.0, -1.0])
    out = sgd_step({"w": p}, {"w": np.zeros(2)}, OptimState(0.1, 0.9, 0.0))["w"]
    assert np.array_equal(out, p)


def test_sgd_momentum_unrolled():
    lr, mu = 0.1, 0.9
    g1, g2 = np.array([1.0, -2.0]), np.array([0.5, 0.5])
    p0 = np.array([0.0, 1.0])
    state = OptimState(lr, mu)
    p1 = sgd_step({"w": p0}, {"w": g1}, state)["w"]
    p2 = sgd_step({"w": p1}, {"w": g2}, state)["w"]
    v1 = g1
    v2 = mu * v1 + g2
    assert np.allclose(p2, p0 - lr * v1 - lr * v2, atol=0, rtol=1e-15)


def test_sgd_shape_mismatch():
    with pytest.raises(ValueError):
        sgd_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimState(0.1))


def test_optim_state_validation():
    with pytest.raises(ValueError):
        OptimState(-1.0)
    with pytest.raises(ValueError):
        OptimState(0.1, momentum=1.0)


def test_finite_diff_quadratic_and_constant():
    g = finite_diff_grad(lambda x: float((x ** 2).sum()), np.array([1.0, 2.0]), h=1e-5)
    assert np.allclose(g, [2.0, 4.0], atol=1e-6)
    assert np.array_equal(finite_diff_grad(lambda x: 3.0, np.ones(3)), np.zeros(3))


def test_finite_diff_keeps_input():
    x = np.array([1.0, 2.0])
    finite_diff_grad(lambda v: float(v.sum()), x)
    assert np.array_equal(x, [1.0, 2.0])


def test_relative_error_scale():
    assert relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert np.isclose(relative_error([1.0], [1.1]), 0.1 / 1.1)
    assert relative_error([0.0], [0.0]) == 0.0


@given(st.integers(0, 2**32))
def test_rng_reproducible(seed):
    a, b = RngStream(seed), RngStream(seed)
    assert np.array_equal(a.normal(size=5), b.normal(size=5))
    sa, sb = a.spawn(2), b.spawn(2)
    assert np.array_equal(sa[1].random(3), sb[1].random(3))


def test_rng_children_independent():
    c = RngStream(0).spawn(2)
    assert not np.array_equal(c[0].random(4), c[1].random(4))
