"""Solver tests: closed-form problems, randomized agreement with the
exhaustive active-set oracle, KKT residual acceptance, scaling invariance,
and honest infeasibility detection.

The randomized suite sizes here are kept small for speed; the acceptance
module runs the full >= 100-problem sweep.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadsteer.qp import (QpProblem, QpStatus, active_set_oracle,
                          kkt_residual, solve_qp)

RNG = np.random.default_rng(20240817)


def random_problem(rng, n=None, me=None, mi=None, with_bounds=True):
    """Strictly convex random QP with a guaranteed-feasible point."""
    n = int(rng.integers(2, 7)) if n is None else n
    me = int(rng.integers(0, min(3, n))) if me is None else me
    mi = int(rng.integers(0, 7)) if mi is None else mi
    M = rng.normal(size=(n, n))
    H = M @ M.T + (0.1 + rng.random()) * np.eye(n)
    g = rng.normal(size=n)
    x_feas = rng.normal(size=n) * 0.5
    A = b = G = h = lower = upper = None
    if me:
        A = rng.normal(size=(me, n))
        b = A @ x_feas
    if mi:
        G = rng.normal(size=(mi, n))
        h = G @ x_feas + rng.random(mi)  # strict slack at x_feas
    if with_bounds and rng.random() < 0.5:
        lower = x_feas - 0.5 - rng.random(n)
        upper = x_feas + 0.5 + rng.random(n)
    return QpProblem(hessian=H, linear_cost=g, eq_matrix=A, eq_vector=b,
                     ineq_matrix=G, ineq_vector=h, lower=lower, upper=upper)


def assert_kkt_ok(problem, sol, tol=1e-8):
    k = sol.kkt
    dual_scale = 1.0
    if sol.ineq_duals.size:
        dual_scale += float(np.abs(sol.ineq_duals).max())
    if sol.lower_duals.size:
        dual_scale += float(np.abs(sol.lower_duals).max())
        dual_scale += float(np.abs(sol.upper_duals).max())
    assert k.stationarity <= tol * max(1.0, float(np.abs(problem.hessian).max()))
    assert k.primal <= tol
    assert k.dual <= tol
    assert k.complementarity <= tol * dual_scale


# ---------------------------------------------------------------- closed forms

def test_unconstrained_minimum():
    p = QpProblem(hessian=np.diag([2.0, 8.0]), linear_cost=np.array([-2.0, 8.0]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.abs(sol.x_star - [1.0, -1.0]).max() < 1e-9


def test_single_active_bound():
    # min x^2 + (y-2)^2 with y <= 1 -> (0, 1), bound dual = 2
    p = QpProblem(hessian=2 * np.eye(2), linear_cost=np.array([0.0, -4.0]),
                  upper=np.array([np.inf, 1.0]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.abs(sol.x_star - [0.0, 1.0]).max() < 1e-9
    assert sol.upper_duals[1] == pytest.approx(2.0, abs=1e-7)


def test_equality_only_lagrange():
    # min 1/2 x'x  s.t. x0 + x1 = 1 -> (0.5, 0.5), y = -0.5 per our sign
    p = QpProblem(hessian=np.eye(2), linear_cost=np.zeros(2),
                  eq_matrix=np.array([[1.0, 1.0]]), eq_vector=np.array([1.0]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.abs(sol.x_star - 0.5).max() < 1e-10
    assert_kkt_ok(p, sol)


def test_inactive_constraints_ignored():
    p = QpProblem(hessian=np.eye(3), linear_cost=np.array([-1.0, 0.0, 2.0]),
                  ineq_matrix=np.array([[1.0, 1.0, 1.0]]),
                  ineq_vector=np.array([50.0]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.abs(sol.x_star - [1.0, 0.0, -2.0]).max() < 1e-8
    assert np.abs(sol.ineq_duals).max() < 1e-8


def test_projection_onto_simplex_vertex():
    # nearest point to (2, -1) on the probability simplex is (1, 0)
    p = QpProblem(hessian=2 * np.eye(2), linear_cost=np.array([-4.0, 2.0]),
                  eq_matrix=np.array([[1.0, 1.0]]), eq_vector=np.array([1.0]),
                  lower=np.zeros(2))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.abs(sol.x_star - [1.0, 0.0]).max() < 1e-8


# ---------------------------------------------------------- oracle agreement

def test_oracle_agreement_randomized():
    hits = 0
    for _ in range(40):
        p = random_problem(RNG)
        sol = solve_qp(p)
        assert sol.status is QpStatus.OPTIMAL
        ref = active_set_oracle(p)
        assert ref.status is QpStatus.OPTIMAL
        scale = 1.0 + float(np.abs(ref.x_star).max())
        assert np.abs(sol.x_star - ref.x_star).max() < 1e-8 * scale
        assert sol.objective <= ref.objective + 1e-8 * (1 + abs(ref.objective))
        assert_kkt_ok(p, sol)
        hits += 1
    assert hits == 40


def test_oracle_agreement_equality_heavy():
    for _ in range(15):
        p = random_problem(RNG, n=6, me=2, mi=4)
        sol = solve_qp(p)
        ref = active_set_oracle(p)
        assert sol.status is QpStatus.OPTIMAL
        scale = 1.0 + float(np.abs(ref.x_star).max())
        assert np.abs(sol.x_star - ref.x_star).max() < 1e-8 * scale


# ------------------------------------------------------------------ properties

@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25)
def test_kkt_residual_at_reported_optimum(seed):
    p = random_problem(np.random.default_rng(seed))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert_kkt_ok(p, sol)


@given(st.integers(0, 2 ** 32 - 1),
       st.floats(1e-3, 1e3))
@settings(max_examples=25)
def test_cost_scaling_leaves_minimizer(seed, c):
    """Scaling the whole objective by c > 0 must not move x*."""
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    q = QpProblem(hessian=c * p.hessian, linear_cost=c * p.linear_cost,
                  eq_matrix=p.eq_matrix, eq_vector=p.eq_vector,
                  ineq_matrix=p.ineq_matrix, ineq_vector=p.ineq_vector,
                  lower=p.lower, upper=p.upper)
    a, b = solve_qp(p), solve_qp(q)
    assert a.status is QpStatus.OPTIMAL and b.status is QpStatus.OPTIMAL
    scale = 1.0 + float(np.abs(a.x_star).max())
    assert np.abs(a.x_star - b.x_star).max() < 1e-6 * scale


def test_deterministic_resolve():
    p = random_problem(np.random.default_rng(7))
    a, b = solve_qp(p), solve_qp(p)
    assert np.array_equal(a.x_star, b.x_star)
    assert a.iterations == b.iterations


# ------------------------------------------------------------- degenerate/hard

def test_soft_constraint_scaling_pattern():
    """Penalty-slack column scaled by 1/sqrt(gamma), gamma = 1e7: the dual
    range is extreme but the solve must stay honest (the allocator relies
    on this pattern at every control tick)."""
    gamma = 1e7
    s = 1.0 / np.sqrt(gamma)
    # variables (x0, x1, sigma'): soften x0 + x1 = 4 via s * sigma'
    H = np.diag([1.0, 1.0, 1.0])
    A = np.array([[1.0, 1.0, s]])
    p = QpProblem(hessian=H, linear_cost=np.zeros(3),
                  eq_matrix=A, eq_vector=np.array([4.0]),
                  lower=np.array([-1.0, -1.0, -np.inf]),
                  upper=np.array([1.0, 1.0, np.inf]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    # bounds clamp x to (1, 1); the slack absorbs the rest exactly
    assert np.abs(sol.x_star[:2] - 1.0).max() < 1e-6
    assert sol.x_star[2] == pytest.approx(2.0 / s, rel=1e-6)


def test_redundant_active_rows():
    """Duplicated rows active at the optimum (degenerate duals)."""
    G = np.array([[1.0, 0.0], [1.0, 0.0], [0.5, 0.0]])
    h = np.array([1.0, 1.0, 0.5])
    p = QpProblem(hessian=np.eye(2), linear_cost=np.array([-5.0, 0.0]),
                  ineq_matrix=G, ineq_vector=h)
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert np.abs(sol.x_star - [1.0, 0.0]).max() < 1e-7


def test_rank_deficient_hessian_with_ridge():
    """Rank-2-plus-tiny-ridge Hessian (the simplex-projection shape)."""
    rng = np.random.default_rng(3)
    C = rng.normal(size=(2, 5))
    H = 2.0 * (C.T @ C + 1e-9 * np.eye(5))
    pt = rng.normal(size=2)
    g = -2.0 * (C.T @ pt)
    p = QpProblem(hessian=H, linear_cost=g,
                  eq_matrix=np.ones((1, 5)), eq_vector=np.array([1.0]),
                  lower=np.zeros(5))
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    assert abs(sol.x_star.sum() - 1.0) < 1e-8
    assert sol.x_star.min() > -1e-10


def test_near_singular_equality_direction():
    """Tiny singular value in A with b loading it: the optimum is large but
    finite and must be found (the allocator's scaled slack column)."""
    s = 3.16e-4
    A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, s]])
    b = np.array([1.0, 2.0])
    p = QpProblem(hessian=np.eye(3), linear_cost=np.zeros(3),
                  eq_matrix=A, eq_vector=b)
    sol = solve_qp(p)
    assert sol.status is QpStatus.OPTIMAL
    # closed form: minimize x1^2 + x2^2 s.t. x1 + s x2 = 2
    denom = 1.0 + s * s
    assert sol.x_star[1] == pytest.approx(2.0 / denom, rel=1e-9)
    assert sol.x_star[2] == pytest.approx(2.0 * s / denom, rel=1e-6)


# -------------------------------------------------------------- infeasibility

def test_infeasible_box():
    p = QpProblem(hessian=np.eye(2), linear_cost=np.zeros(2),
                  ineq_matrix=np.array([[1.0, 0.0]]), ineq_vector=np.array([-2.0]),
                  lower=np.array([0.0, -np.inf]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.INFEASIBLE


def test_infeasible_equality_vs_bound():
    p = QpProblem(hessian=np.eye(2), linear_cost=np.zeros(2),
                  eq_matrix=np.array([[1.0, 1.0]]), eq_vector=np.array([10.0]),
                  upper=np.array([1.0, 1.0]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.INFEASIBLE


def test_infeasible_opposing_halfspaces():
    G = np.array([[1.0, 0.0], [-1.0, 0.0]])
    h = np.array([-1.0, -1.0])  # x0 <= -1 and x0 >= 1
    p = QpProblem(hessian=np.eye(2), linear_cost=np.zeros(2),
                  ineq_matrix=G, ineq_vector=h)
    sol = solve_qp(p)
    assert sol.status is QpStatus.INFEASIBLE


def test_feasible_problems_never_report_infeasible():
    for seed in range(30):
        p = random_problem(np.random.default_rng(seed))
        sol = solve_qp(p)
        assert sol.status is QpStatus.OPTIMAL, seed


# ----------------------------------------------------------------- validation

def test_rejects_asymmetric_hessian():
    with pytest.raises(ValueError):
        QpProblem(hessian=np.array([[1.0, 2.0], [0.0, 1.0]]),
                  linear_cost=np.zeros(2))


def test_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        QpProblem(hessian=np.eye(2), linear_cost=np.zeros(3))
    with pytest.raises(ValueError):
        QpProblem(hessian=np.eye(2), linear_cost=np.zeros(2),
                  eq_matrix=np.ones((1, 3)), eq_vector=np.ones(1))


def test_oracle_refuses_large_enumeration():
    p = QpProblem(hessian=np.eye(25), linear_cost=np.zeros(25),
                  lower=np.zeros(25))
    with pytest.raises(ValueError):
        active_set_oracle(p)
