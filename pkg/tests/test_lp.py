import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfa.lp import (FEAS_TOL, OBJ_TOL, LpProblem, LpStatus, NumericalBreakdown,
                    basic_value_sensitivity, solve, structural_sensitivity)
from oracles import INFEASIBLE, OPTIMAL, UNBOUNDED, enumerate_lp, random_integer_lp

STATUS = {LpStatus.OPTIMAL: OPTIMAL, LpStatus.INFEASIBLE: INFEASIBLE, LpStatus.UNBOUNDED: UNBOUNDED}


def lp(c, A, b):
    return LpProblem(np.array(c, float), np.array(A, float), np.array(b, float))


@st.composite
def integer_lps(draw, max_m=6, max_n=6):
    m = draw(st.integers(1, max_m))
    n = draw(st.integers(1, max_n))
    ints = st.integers(-5, 5)
    A = draw(st.lists(st.lists(ints, min_size=n, max_size=n), min_size=m, max_size=m))
    b = draw(st.lists(ints, min_size=m, max_size=m))
    c = draw(st.lists(ints, min_size=n, max_size=n))
    return np.array(c, float), np.array(A, float), np.array(b, float)


def test_single_variable_bound():
    s = solve(lp([1], [[1]], [5]))
    assert s.status is LpStatus.OPTIMAL
    assert s.x[0] == pytest.approx(5)
    assert s.objective == pytest.approx(5)
    assert s.duals[0] == pytest.approx(1)


def test_empty_feasible_set():
    s = solve(lp([0], [[1]], [-1]))
    assert s.status is LpStatus.INFEASIBLE
    assert s.diagnostic is not None


def test_unbounded_reports_column():
    s = solve(lp([1, 0], [[-1, 1]], [1]))
    assert s.status is LpStatus.UNBOUNDED
    assert s.diagnostic is not None


def test_sensitivity_identity_basis():
    s = solve(lp([1], [[1]], [5]))
    assert basic_value_sensitivity(s)[0, 0] == pytest.approx(1)


def test_sensitivity_two_by_two():
    # max x1 + x2 s.t. x1 <= 3, x1 + x2 <= 5; lowest-index pricing lands on x = (3, 2)
    c, A, b = [1, 1], [[1, 0], [1, 1]], np.array([3.0, 5.0])
    s = solve(lp(c, A, b))
    np.testing.assert_allclose(s.x, [3, 2])
    S = structural_sensitivity(s, 2)
    assert S[1, 1] == pytest.approx(1)
    assert S[1, 0] == pytest.approx(-1)
    # independent check by re-solving b +- h on the same vertex
    h = 1e-3
    for i, expect in ((1, 1.0), (0, -1.0)):
        e = np.zeros(2)
        e[i] = h
        up, dn = solve(lp(c, A, b + e)), solve(lp(c, A, b - e))
        assert (up.x[1] - dn.x[1]) / (2 * h) == pytest.approx(expect)


def test_invalid_problem_shapes():
    with pytest.raises(ValueError):
        LpProblem(np.ones(2), np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        LpProblem(np.ones(1), np.array([[np.inf]]), np.ones(1))


def test_iteration_limit_raises():
    rng = np.random.default_rng(0)
    A = rng.uniform(0.5, 1.5, size=(8, 8))
    with pytest.raises(NumericalBreakdown):
        solve(LpProblem(np.ones(8), A, np.ones(8)), max_iter=1)


def test_oracle_sample():
    rng = np.random.default_rng(7)
    for _ in range(200):
        c, A, b = random_integer_lp(rng)
        s = solve(LpProblem(c, A, b))
        status, obj = enumerate_lp(c, A, b)
        assert STATUS[s.status] == status
        if status == OPTIMAL:
            assert s.objective == pytest.approx(obj, abs=1e-8)


@settings(max_examples=300, deadline=None)
@given(integer_lps())
def test_optimal_solution_invariants(data):
    c, A, b = data
    s = solve(LpProblem(c, A, b))
    m, n = A.shape
    if not s.is_optimal:
        return
    x, y = s.x, s.duals
    assert np.all(x >= -FEAS_TOL)
    assert np.all(A @ x <= b + FEAS_TOL)
    assert s.objective == pytest.approx(c @ x, abs=OBJ_TOL)
    # basic values equal Binv b in basis order
    np.testing.assert_allclose(s.basic_values, s.basis_inverse @ b, atol=OBJ_TOL)
    # y = Binv^T c_B with zero cost on slacks
    cB = np.array([c[j] if j < n else 0.0 for j in s.basis])
    np.testing.assert_allclose(y, s.basis_inverse.T @ cB, atol=OBJ_TOL)
    # strong duality, dual feasibility, complementary slackness
    assert c @ x == pytest.approx(b @ y, abs=OBJ_TOL)
    assert np.all(y >= -FEAS_TOL)
    np.testing.assert_allclose(y * (b - A @ x), 0.0, atol=OBJ_TOL)
    # basis inverse really inverts the basis of [A | I]
    M = np.hstack([A, np.eye(m)])
    np.testing.assert_allclose(s.basis_inverse @ M[:, list(s.basis)], np.eye(m), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(integer_lps())
def test_determinism(data):
    c, A, b = data
    s1, s2 = solve(LpProblem(c, A, b)), solve(LpProblem(c, A, b))
    assert s1.status is s2.status
    assert s1.basis == s2.basis


@settings(max_examples=150, deadline=None)
@given(integer_lps(), st.integers(0, 5))
def test_basis_inverse_matches_rhs_perturbation(data, row):
    c, A, b = data
    s = solve(LpProblem(c, A, b))
    if not s.is_optimal:
        return
    row %= len(b)
    h = 1e-6
    e = np.zeros(len(b))
    e[row] = h
    up, dn = solve(LpProblem(c, A, b + e)), solve(LpProblem(c, A, b - e))
    if not (up.is_optimal and dn.is_optimal):
        return
    if set(up.basis) != set(s.basis) or set(dn.basis) != set(s.basis):
        return  # perturbation crosses a basis change
    n = A.shape[1]
    fd = (up.x - dn.x) / (2 * h)
    np.testing.assert_allclose(fd, structural_sensitivity(s, n)[:, row], atol=1e-6)


def test_bland_terminates_on_degenerate_cycle_example():
    # classic cycling instance for Dantzig pricing with lowest-index ties
    c = np.array([10.0, -57.0, -9.0, -24.0])
    A = np.array([[0.5, -5.5, -2.5, 9.0], [0.5, -1.5, -0.5, 1.0], [1.0, 0.0, 0.0, 0.0]])
    b = np.array([0.0, 0.0, 1.0])
    s = solve(LpProblem(c, A, b))
    assert s.is_optimal
    assert s.objective == pytest.approx(1.0)
