import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctregions.errors import DimensionError, DomainError, SingularityError
from ctregions.linalg import least_squares, mat_exp, rcond_estimate, solve
from ctregions.switchfit import design_matrix, monomials


def test_exp_at_zero_is_identity():
    M = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(mat_exp(M, 0.0), np.eye(3))


def test_exp_nilpotent():
    t = 2.5
    assert np.allclose(mat_exp([[0.0, 1.0], [0.0, 0.0]], t), [[1.0, t], [0.0, 1.0]], atol=1e-15)


def test_exp_scalar():
    assert mat_exp([[-1.0]], 1.0)[0, 0] == pytest.approx(0.36787944117144233, rel=1e-15)


def test_exp_vectorised_matches_scalar_calls():
    M = np.array([[0.0, 1.0], [-2.0, -3.0]])
    ts = np.array([0.0, 0.3, 7.0, 40.0])
    E = mat_exp(M, ts)
    for k, t in enumerate(ts):
        assert np.allclose(E[k], mat_exp(M, t), rtol=1e-13, atol=1e-300)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-3, 3)), st.floats(0, 4))
def test_exp_agrees_with_scipy(M, t):
    ref = scipy.linalg.expm(M * t)
    assert np.allclose(mat_exp(M, t), ref, rtol=1e-11, atol=1e-11 * max(1.0, np.abs(ref).max()))


@settings(max_examples=30, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-2, 2)), st.floats(0, 2), st.floats(0, 2))
def test_exp_semigroup(M, s, t):
    lhs = mat_exp(M, s + t)
    rhs = mat_exp(M, s) @ mat_exp(M, t)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(lhs).max()))


def test_exp_rejects_bad_input():
    with pytest.raises(DimensionError):
        mat_exp(np.ones((2, 3)))
    with pytest.raises(DomainError):
        mat_exp([[np.nan]])


def test_solve_identity_and_diagonal():
    b = np.array([3.0, -1.0])
    assert np.allclose(solve(np.eye(2), b), b)
    assert np.allclose(solve([[2.0, 0.0], [0.0, 4.0]], [1.0, 1.0]), [0.5, 0.25])


def test_solve_singular():
    with pytest.raises(SingularityError) as info:
        solve([[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])
    assert info.value.rcond is not None and info.value.rcond < 1e-12


def test_rcond_matches_dense_condition():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(5, 5))
    rc, _, _ = rcond_estimate(M)
    exact = 1.0 / np.linalg.cond(M, 1)
    assert exact / 3 <= rc <= exact * 3


def test_least_squares_exact_fit():
    rng = np.random.default_rng(0)
    D = rng.normal(size=(30, 4))
    y = D @ np.array([1.0, -2.0, 0.5, 3.0])
    coef, r2 = least_squares(D, y)
    assert np.allclose(coef, [1.0, -2.0, 0.5, 3.0], atol=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-14)


def test_least_squares_constant_targets():
    rng = np.random.default_rng(1)
    D = np.column_stack([np.ones(20), rng.normal(size=20)])
    coef, r2 = least_squares(D, np.full(20, 2.5))
    assert np.allclose(coef, [2.5, 0.0], atol=1e-12)
    assert r2 == 1.0


def test_least_squares_recovers_planted_polynomial():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(200, 3))
    exps = monomials(3, 3)
    coef, r2 = least_squares(design_matrix(X, exps), 1.0 + 0.1 * X[:, 0])
    expected = np.zeros(len(exps))
    expected[exps.index((0, 0, 0))] = 1.0
    expected[exps.index((1, 0, 0))] = 0.1
    assert np.allclose(coef, expected, atol=1e-8)


def test_least_squares_rank_deficient():
    D = np.column_stack([np.ones(10), np.ones(10)])
    with pytest.raises(SingularityError):
        least_squares(D, np.arange(10.0))
