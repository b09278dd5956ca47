import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fisherbound.errors import DimensionMismatch, NonFinite, NotPositiveDefinite
from fisherbound.numkit import (
    central_diff,
    dominates,
    factor_spd,
    min_eigenvalue,
    pack_upper,
    quad_form_inv,
    solve_spd,
    unpack_upper,
)


def random_spd(rng, n, spread=1.0):
    a = rng.standard_normal((n, n))
    s = np.exp(spread * rng.standard_normal(n))
    return (a @ a.T + n * np.eye(n)) * np.outer(s, s)


@given(order=st.integers(1, 8), data=st.data())
def test_pack_unpack_roundtrip(order, data):
    packed = data.draw(arrays(float, order * (order + 1) // 2, elements=st.floats(-1e6, 1e6)))
    a = unpack_upper(packed, order)
    np.testing.assert_array_equal(a, a.T)
    np.testing.assert_array_equal(pack_upper(a), packed)


def test_pack_order_is_row_major_upper():
    a = np.array([[1.0, 2, 3], [2, 4, 5], [3, 5, 6]])
    np.testing.assert_array_equal(pack_upper(a), [1, 2, 3, 4, 5, 6])


def test_unpack_wrong_length():
    with pytest.raises(DimensionMismatch):
        unpack_upper([1.0, 2.0], 2)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_solve_matches_dense_solver(seed, n):
    rng = np.random.default_rng(seed)
    a = random_spd(rng, n, spread=3.0)
    b = rng.standard_normal(n)
    x = solve_spd(a, b)
    np.testing.assert_allclose(a @ x, b, rtol=1e-8, atol=1e-8 * np.abs(a).max() * np.abs(x).max())


def test_factor_solves_matrix_rhs():
    rng = np.random.default_rng(1)
    a = random_spd(rng, 4)
    b = rng.standard_normal((4, 2))
    np.testing.assert_allclose(factor_spd(a).solve(b), np.linalg.solve(a, b), rtol=1e-10)


def test_equilibration_handles_badly_scaled_matrix():
    # diagonal scaling spanning 16 orders of magnitude is harmless after equilibration
    c = np.array([[1.0, 0.5], [0.5, 1.0]])
    s = np.array([1e-8, 1e8])
    a = c * np.outer(s, s)
    fac = factor_spd(a)
    assert fac.jitter == 0.0
    assert fac.cond == pytest.approx(3.0)


def test_singular_matrix_gets_jitter():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    fac = factor_spd(a)
    assert fac.jitter == pytest.approx(1e-12)


def test_indefinite_matrix_rejected():
    with pytest.raises(NotPositiveDefinite):
        factor_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotPositiveDefinite):
        factor_spd(np.array([[0.0, 0.0], [0.0, 1.0]]))


def test_non_square_and_non_finite():
    with pytest.raises(DimensionMismatch):
        factor_spd(np.ones((2, 3)))
    with pytest.raises(NonFinite):
        factor_spd(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_quad_form_inv_matches_explicit_inverse():
    rng = np.random.default_rng(5)
    a = random_spd(rng, 5)
    g = rng.standard_normal((5, 2))
    q = quad_form_inv(a, g)
    np.testing.assert_allclose(q, g.T @ np.linalg.inv(a) @ g, rtol=1e-10)
    np.testing.assert_array_equal(q, q.T)


def test_dominates():
    a = np.diag([2.0, 3.0])
    b = np.diag([1.0, 3.0])
    assert dominates(a, b)
    assert not dominates(b, a)
    assert dominates(b, b + 1e-10 * np.eye(2), tol=1e-9)
    assert min_eigenvalue(a - b) == pytest.approx(0.0)
    with pytest.raises(DimensionMismatch):
        dominates(a, np.eye(3))


def test_central_diff():
    assert central_diff(np.sin, 0.3, 1e-5) == pytest.approx(np.cos(0.3), rel=1e-9)
    with pytest.raises(NonFinite):
        central_diff(lambda x: np.log(x) if x > 0 else np.nan, 0.0, 1e-3)
    with pytest.raises(ValueError):
        central_diff(np.sin, 0.0, 0.0)
