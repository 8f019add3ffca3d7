import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from ccrn.lp import LpProblem, LpStatus, solve_lp

from oracles import random_lp_instance as random_instance, vertex_enumeration


def test_small_textbook_problem():
    # max 3x + 2y  s.t.  x + y <= 4, x + 3y <= 6, x <= 3
    sol = solve_lp(LpProblem([3, 2], A_ub=[[1, 1], [1, 3]], b_ub=[4, 6], hi=[3, np.inf]))
    assert sol.optimal
    assert sol.objective == pytest.approx(11.0)
    assert np.allclose(sol.x, [3, 1])


def test_infeasible_and_unbounded():
    assert solve_lp(LpProblem([1], A_eq=[[1]], b_eq=[2], hi=[1])).status is LpStatus.INFEASIBLE
    assert solve_lp(LpProblem([1, 0], A_ub=[[-1, 1]], b_ub=[1])).status is LpStatus.UNBOUNDED


def test_free_and_negative_bounds():
    sol = solve_lp(LpProblem([1, -1], A_eq=[[1, 1]], b_eq=[0], lo=[-5, -np.inf], hi=[5, np.inf]))
    assert sol.optimal and sol.objective == pytest.approx(10.0)
    assert np.allclose(sol.x, [5, -5])


def test_redundant_equalities():
    sol = solve_lp(LpProblem([1, 1], A_eq=[[1, 1], [2, 2]], b_eq=[1, 2], hi=[1, 1]))
    assert sol.optimal and sol.objective == pytest.approx(1.0)


def test_bounds_only():
    sol = solve_lp(LpProblem([1, -1], lo=[0, 0], hi=[2, 3]))
    assert sol.optimal and sol.objective == 2.0


def test_rejects_bad_shapes():
    with pytest.raises(ValueError):
        LpProblem([1, 1], A_eq=[[1, 1]], b_eq=[1, 2])
    with pytest.raises(ValueError):
        LpProblem([1], lo=[2], hi=[1])


def test_matches_vertex_enumeration_on_100_instances():
    rng = np.random.default_rng(7)
    n_opt = 0
    for _ in range(100):
        c, A_eq, b_eq, A_ub, b_ub, hi = random_instance(rng)
        status, value = vertex_enumeration(c, A_eq, b_eq, A_ub, b_ub, hi)
        sol = solve_lp(LpProblem(c, A_eq, b_eq, A_ub, b_ub, lo=0.0, hi=hi))
        assert sol.status.value == status
        if status == "Optimal":
            n_opt += 1
            assert abs(sol.objective - value) <= 1e-8
    assert n_opt > 30


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_agrees_with_highs(seed):
    rng = np.random.default_rng(seed)
    c, A_eq, b_eq, A_ub, b_ub, hi = random_instance(rng, n=int(rng.integers(2, 8)))
    if rng.random() < 0.3:
        hi = np.where(rng.random(hi.size) < 0.5, np.inf, hi)
    sol = solve_lp(LpProblem(c, A_eq, b_eq, A_ub, b_ub, lo=0.0, hi=hi))
    ref = linprog(-c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq if len(b_eq) else None,
                  b_eq=b_eq if len(b_eq) else None, bounds=list(zip(np.zeros_like(hi), hi)),
                  method="highs")
    if ref.status == 2:
        # HiGHS presolve reports some unbounded models as infeasible; ask again without it.
        ref = linprog(-c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq if len(b_eq) else None,
                      b_eq=b_eq if len(b_eq) else None, bounds=list(zip(np.zeros_like(hi), hi)),
                      method="highs", options={"presolve": False})
    expected = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}[ref.status]
    assert sol.status is expected
    if sol.optimal:
        assert sol.objective == pytest.approx(-ref.fun, abs=1e-8)
        assert sol.residual <= 1e-9


def test_row_permutation_keeps_optimum():
    rng = np.random.default_rng(3)
    for _ in range(30):
        c, A_eq, b_eq, A_ub, b_ub, hi = random_instance(rng)
        base = solve_lp(LpProblem(c, A_eq, b_eq, A_ub, b_ub, hi=hi))
        perm = rng.permutation(len(b_ub))
        other = solve_lp(LpProblem(c, A_eq, b_eq, A_ub[perm], b_ub[perm], hi=hi))
        assert base.status is other.status
        if base.optimal:
            assert base.objective == pytest.approx(other.objective, abs=1e-9)


def test_weak_duality_bound():
    # Any dual-feasible y gives an upper bound b @ y for max c@x, Ax <= b, x >= 0.
    rng = np.random.default_rng(11)
    for _ in range(30):
        A = rng.uniform(0.1, 1.0, size=(3, 4))
        b = rng.uniform(1, 2, size=3)
        c = rng.uniform(0, 1, size=4)
        sol = solve_lp(LpProblem(c, A_ub=A, b_ub=b))
        y = np.full(3, np.max(c / A.min(axis=0)))
        assert np.all(A.T @ y >= c - 1e-12)
        assert sol.objective <= b @ y + 1e-12


def test_deterministic():
    rng = np.random.default_rng(5)
    c, A_eq, b_eq, A_ub, b_ub, hi = random_instance(rng)
    one = solve_lp(LpProblem(c, A_eq, b_eq, A_ub, b_ub, hi=hi))
    two = solve_lp(LpProblem(c, A_eq, b_eq, A_ub, b_ub, hi=hi))
    assert one.status is two.status and (one.x is None or np.array_equal(one.x, two.x))
