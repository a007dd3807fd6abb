"""numcore: construction guards, example values, and the softmax-family laws."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsc.errors import DimensionError, NonFiniteError
from gsc.numcore import argmax, dot, logsumexp, matrix, matvec, softmax, vector

# frozen from the mpmath oracle below (the reference implementation of
# log-sum-exp evaluated at 50 digits)
LSE_123 = 3.4076059644443806


def mp_logsumexp(values):
    with mpmath.workdps(50):
        return float(mpmath.log(mpmath.fsum(mpmath.e**v for v in values)))


def test_dot_examples():
    assert dot([1, 2], [3, 4]) == 11.0
    assert dot([0, 0], [5, 7]) == 0.0
    assert dot([1.5, -2, 0.5], [2, 1, 4]) == pytest.approx(3.0, abs=1e-15)


def test_dot_dimension_error():
    with pytest.raises(DimensionError):
        dot([1, 2], [1, 2, 3])


def test_matvec_examples():
    assert np.allclose(matvec(np.eye(2), [3, 4]), [3, 4])
    assert np.allclose(matvec([[1, 2], [0, 1]], [1, 1]), [3, 1])
    assert np.allclose(matvec(np.zeros((2, 3)), [1, 2, 3]), [0, 0])
    with pytest.raises(DimensionError):
        matvec(np.eye(2), [1, 2, 3])


def test_logsumexp_examples():
    assert logsumexp([0, 0]) == pytest.approx(math.log(2), abs=1e-12)
    assert logsumexp([1000, 1000]) == pytest.approx(1000 + math.log(2), abs=1e-9)
    assert logsumexp([1, 2, 3]) == pytest.approx(LSE_123, abs=1e-12)
    assert mp_logsumexp([1, 2, 3]) == pytest.approx(LSE_123, abs=1e-14)
    with pytest.raises(DimensionError):
        logsumexp([])


def test_softmax_examples():
    assert np.allclose(softmax([0, 0, 0, 0]), 0.25)
    big = softmax([1000, 0])
    assert np.all(np.isfinite(big)) and big[0] > 0.999999
    two = softmax([1, 2])
    assert two[0] == pytest.approx(0.2689414213699951, abs=1e-12)
    assert two[1] == pytest.approx(0.7310585786300049, abs=1e-12)


def test_argmax_examples():
    assert argmax([1, 3, 2]) == 1
    assert argmax([5, 5]) == 0  # tie to the lowest index
    assert argmax([-1, -2, -0.5]) == 2


def test_vector_construction_guards():
    with pytest.raises(NonFiniteError):
        vector([1.0, float("nan")])
    with pytest.raises(NonFiniteError):
        vector([1.0, float("inf")])
    with pytest.raises(DimensionError):
        vector([])
    with pytest.raises(DimensionError):
        vector([[1.0, 2.0]])
    v = vector([1.0, 2.0])
    with pytest.raises(ValueError):
        v[0] = 5.0  # read-only


def test_matrix_construction_guards():
    with pytest.raises(NonFiniteError):
        matrix([[1.0, float("nan")]])
    with pytest.raises(DimensionError):
        matrix([1.0, 2.0])
    m = matrix([[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ValueError):
        m[0, 0] = 0.0


@given(st.lists(st.floats(min_value=-100, max_value=100), min_size=1, max_size=10),
       st.floats(min_value=-50, max_value=50))
def test_logsumexp_shift(values, c):
    assert logsumexp(np.asarray(values) + c) == pytest.approx(
        logsumexp(values) + c, abs=1e-9)


@settings(max_examples=200)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=16))
def test_softmax_sums_to_one(values):
    assert abs(float(np.sum(softmax(values))) - 1.0) <= 1e-12


def test_softmax_sum_sweep():
    # 1e4 random vectors spanning magnitudes 1e-6 .. 1e6
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        scale = 10.0 ** rng.uniform(-6, 6)
        v = scale * rng.standard_normal(rng.integers(1, 12))
        assert abs(float(np.sum(softmax(v))) - 1.0) <= 1e-12


def test_softmax_shift_invariance(rng):
    for _ in range(100):
        v = rng.standard_normal(6)
        c = rng.uniform(-10, 10)
        assert np.allclose(softmax(v), softmax(v + c), atol=1e-12)


@given(st.lists(st.floats(min_value=-700, max_value=700), min_size=1, max_size=8),
       st.lists(st.floats(min_value=-700, max_value=700), min_size=1, max_size=8))
def test_logsumexp_linf_lipschitz(a, b):
    n = min(len(a), len(b))
    a, b = np.asarray(a[:n]), np.asarray(b[:n])
    lhs = abs(logsumexp(a) - logsumexp(b))
    rhs = float(np.max(np.abs(a - b)))
    # 1e-12 slack absorbs last-ulp rounding when a ~ b
    assert lhs <= rhs + 1e-12 * max(1.0, abs(logsumexp(a)))
