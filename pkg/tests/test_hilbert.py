import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cesaro_lab.hilbert import HVector, add, inner, norm, scale, zero


def test_basic_ops():
    u = HVector([3.0, 4.0])
    v = HVector([1.0, -1.0])
    assert norm(u) == 5.0
    assert inner(u, v) == pytest.approx(-1.0)
    assert np.allclose(add(u, v).coeffs, [4.0, 3.0])
    assert np.allclose(scale(2.5, v).coeffs, [2.5, -2.5])


def test_zero_vector():
    z = zero(3)
    assert z.dim == 3
    assert norm(z) == 0.0
    u = HVector([1.0, 2.0, 3.0])
    assert np.allclose(add(u, z).coeffs, u.coeffs)


def test_norm_zero_iff_zero():
    assert norm(HVector([0.0, 0.0])) == 0.0
    assert norm(HVector([0.0, 1e-300])) > 0.0


def test_dimension_mismatch():
    u = HVector([1.0])
    v = HVector([1.0, 2.0])
    with pytest.raises(ValueError, match="dimension mismatch"):
        add(u, v)
    with pytest.raises(ValueError, match="dimension mismatch"):
        inner(u, v)


def test_validation():
    with pytest.raises(ValueError):
        HVector([])
    with pytest.raises(ValueError):
        HVector([[1.0, 2.0]])
    with pytest.raises(ValueError):
        HVector([np.nan])
    with pytest.raises(ValueError):
        HVector([np.inf, 0.0])


def test_coefficients_are_write_locked():
    u = HVector([1.0, 2.0])
    with pytest.raises(ValueError):
        u.coeffs[0] = 9.0


def test_input_array_is_copied():
    raw = np.array([1.0, 2.0])
    u = HVector(raw)
    raw[0] = 99.0
    assert u.coeffs[0] == 1.0


finite_coeffs = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
    min_size=1,
    max_size=6,
)


@settings(max_examples=60, deadline=None)
@given(finite_coeffs, finite_coeffs.map(lambda c: c), st.floats(-100, 100))
def test_norm_properties(c1, c2, alpha):
    d = max(len(c1), len(c2))
    u = HVector(c1 + [0.0] * (d - len(c1)))
    v = HVector(c2 + [0.0] * (d - len(c2)))
    # triangle inequality and absolute homogeneity
    assert norm(add(u, v)) <= norm(u) + norm(v) + 1e-9 * (1 + norm(u) + norm(v))
    lhs = norm(scale(alpha, u))
    rhs = abs(alpha) * norm(u)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(finite_coeffs)
def test_inner_consistent_with_norm(c):
    u = HVector(c)
    assert math.sqrt(inner(u, u)) == pytest.approx(norm(u), rel=1e-12, abs=1e-12)
