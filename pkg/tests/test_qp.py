"""QP solver tests against a brute-force KKT active-set enumeration oracle."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from romloco.qp import (
    QpDimensionError,
    QpProblem,
    QpSettings,
    QpSolution,
    QpSolver,
    qp_solve,
    qp_update_vectors,
)


def active_set_oracle(p, q, a, lower, upper, tol=1e-9):
    """Globally solve a small strictly convex box-constrained QP.

    Enumerates every assignment of constraint rows to {inactive, at lower,
    at upper}, solves the equality-constrained KKT system, and keeps the
    best primal/dual feasible candidate.
    """
    m = a.shape[0]
    best_obj, best_z = np.inf, None
    for assignment in itertools.product((0, 1, 2), repeat=m):
        act = [i for i, s in enumerate(assignment) if s != 0]
        rhs_vals = [lower[i] if assignment[i] == 1 else upper[i] for i in act]
        if any(not np.isfinite(v) for v in rhs_vals):
            continue
        n_act = len(act)
        kkt = np.block(
            [
                [p, a[act].T if n_act else np.zeros((p.shape[0], 0))],
                [a[act] if n_act else np.zeros((0, p.shape[0])), np.zeros((n_act, n_act))],
            ]
        )
        rhs = np.concatenate([-q, np.asarray(rhs_vals)])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        z = sol[: p.shape[0]]
        nu = sol[p.shape[0] :]
        az = a @ z
        if np.any(az < lower - tol) or np.any(az > upper + tol):
            continue
        ok = True
        for j, i in enumerate(act):
            if assignment[i] == 2 and nu[j] < -tol:  # at upper: multiplier >= 0
                ok = False
                break
            if assignment[i] == 1 and nu[j] > tol:  # at lower: multiplier <= 0
                ok = False
                break
        if not ok:
            continue
        obj = 0.5 * z @ p @ z + q @ z
        if obj < best_obj:
            best_obj, best_z = obj, z
    return best_obj, best_z


def random_qp(rng, n, m):
    """Strictly convex QP with a guaranteed-feasible box."""
    w = rng.normal(size=(n, n))
    qmat, _ = np.linalg.qr(w)
    p = qmat @ np.diag(rng.uniform(0.5, 3.0, size=n)) @ qmat.T
    p = 0.5 * (p + p.T)
    q = rng.normal(size=n)
    a = rng.normal(size=(m, n))
    z0 = rng.normal(size=n)
    slack = np.abs(rng.normal(size=m)) + 0.1
    lower = a @ z0 - slack
    upper = a @ z0 + rng.uniform(0.0, 1.0, size=m)
    # sprinkle in equalities (kept feasible at z0) and one-sided rows
    az0 = a @ z0
    for i in range(m):
        r = rng.uniform()
        if r < 0.2:
            lower[i] = upper[i] = az0[i]
        elif r < 0.35:
            lower[i] = -np.inf
    return QpProblem(p, q, a, lower, upper)


class TestBasics:
    def test_unconstrained_minimum(self):
        p = QpProblem(np.eye(2), np.array([-1.0, -1.0]), np.zeros((0, 2)), np.zeros(0), np.zeros(0))
        sol = qp_solve(p)
        assert sol.status == "solved"
        np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-5)

    def test_active_bound(self):
        p = QpProblem(np.eye(1), np.array([-10.0]), np.eye(1), np.array([0.0]), np.array([1.0]))
        sol = qp_solve(p)
        assert sol.status == "solved"
        assert sol.z[0] == pytest.approx(1.0, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(QpDimensionError):
            QpProblem(np.eye(2), np.zeros(3), np.zeros((0, 2)), np.zeros(0), np.zeros(0))
        with pytest.raises(QpDimensionError):
            QpProblem(np.eye(2), np.zeros(2), np.ones((2, 2)), np.zeros(2), np.zeros(1))

    def test_asymmetric_cost_rejected(self):
        p = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            QpProblem(p, np.zeros(2), np.zeros((0, 2)), np.zeros(0), np.zeros(0))

    def test_crossed_bounds_rejected(self):
        with pytest.raises(ValueError):
            QpProblem(np.eye(1), np.zeros(1), np.eye(1), np.array([1.0]), np.array([0.0]))

    def test_primal_infeasible_detected(self):
        # z >= 1 and z <= -1 simultaneously
        p = QpProblem(
            np.eye(1),
            np.zeros(1),
            np.array([[1.0], [1.0]]),
            np.array([1.0, -np.inf]),
            np.array([np.inf, -1.0]),
        )
        sol = qp_solve(p, QpSettings(max_iter=2000))
        assert sol.status == "primal-infeasible"


def residual_scales(problem, sol):
    """Scale terms matching the solver's relative-tolerance convention."""
    az = problem.a_mat @ sol.z if problem.a_mat.size else np.zeros(0)
    scale_p = np.abs(az).max(initial=0.0)
    scale_d = max(
        np.abs(problem.p_mat @ sol.z).max(initial=0.0),
        np.abs(problem.a_mat.T @ sol.y).max(initial=0.0) if problem.a_mat.size else 0.0,
        np.abs(problem.q_vec).max(initial=0.0),
    )
    return scale_p, scale_d


class TestOracleComparison:
    def test_fifty_random_qps_match_enumeration(self):
        rng = np.random.default_rng(123)
        # solve tight so the objective comparison probes correctness, then
        # confirm the spec-level 1e-6 residual and objective guarantees
        settings = QpSettings(eps_abs=1e-9, eps_rel=1e-9, max_iter=20000)
        for trial in range(50):
            n = int(rng.integers(2, 7))
            m = int(rng.integers(1, 9))
            problem = random_qp(rng, n, m)
            expected_obj, expected_z = active_set_oracle(
                problem.p_mat, problem.q_vec, problem.a_mat, problem.lower, problem.upper
            )
            assert expected_z is not None, f"oracle found no solution on trial {trial}"
            sol = qp_solve(problem, settings)
            assert sol.status == "solved", f"trial {trial}: {sol.status}"
            assert problem.objective(sol.z) == pytest.approx(expected_obj, abs=1e-6)
            scale_p, scale_d = residual_scales(problem, sol)
            assert sol.primal_res <= 1e-6 + 1e-6 * scale_p
            assert sol.dual_res <= 1e-6 + 1e-6 * scale_d


class TestResidualInvariants:
    def test_kkt_residuals_on_solved(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            problem = random_qp(rng, 5, 6)
            sol = qp_solve(problem)
            assert sol.status == "solved"
            scale_p, scale_d = residual_scales(problem, sol)
            az = problem.a_mat @ sol.z
            viol = np.maximum(problem.lower - az, 0) + np.maximum(az - problem.upper, 0)
            assert viol.max() <= 1e-6 + 1e-6 * scale_p
            dual = problem.p_mat @ sol.z + problem.q_vec + problem.a_mat.T @ sol.y
            assert np.abs(dual).max() <= 1e-6 + 1e-6 * scale_d

    def test_objective_not_beaten_by_feasible_points(self):
        rng = np.random.default_rng(77)
        problem = random_qp(rng, 4, 4)
        sol = qp_solve(problem)
        obj = problem.objective(sol.z)
        for _ in range(200):
            cand = sol.z + rng.normal(size=4) * 0.1
            az = problem.a_mat @ cand
            if np.all(az >= problem.lower - 1e-9) and np.all(az <= problem.upper + 1e-9):
                assert problem.objective(cand) >= obj - 1e-6


class TestWarmStartAndUpdates:
    def test_identical_resolve_is_instant(self):
        rng = np.random.default_rng(5)
        problem = random_qp(rng, 5, 6)
        solver = QpSolver(problem)
        s1 = solver.solve()
        s2 = solver.solve(warm=(s1.z, s1.y))
        assert s2.iterations <= 2
        np.testing.assert_allclose(s2.z, s1.z, atol=1e-8)

    def test_solution_continuous_in_q(self):
        rng = np.random.default_rng(15)
        problem = random_qp(rng, 4, 5)
        # solve well below the perturbation sizes so solver noise cannot mask
        # the continuity of the underlying solution map
        tight = QpSettings(eps_abs=1e-11, eps_rel=1e-11, max_iter=50000)
        solver = QpSolver(problem, tight)
        q0 = problem.q_vec.copy()
        base = solver.solve()
        deltas = []
        for eps in (1e-2, 1e-4, 1e-6):
            solver.update_vectors(q0 + eps, problem.lower, problem.upper)
            sol = solver.solve(warm=(base.z, base.y))
            deltas.append(np.linalg.norm(sol.z - base.z))
            solver.update_vectors(q0, problem.lower, problem.upper)
        assert deltas[0] > deltas[1] > deltas[2]
        assert deltas[2] < 1e-4

    def test_bound_update_moves_optimum_to_new_boundary(self):
        p = QpProblem(np.eye(1), np.array([-10.0]), np.eye(1), np.array([0.0]), np.array([1.0]))
        solver = QpSolver(p)
        s1 = solver.solve()
        assert s1.z[0] == pytest.approx(1.0, abs=1e-5)
        solver.update_vectors(p.q_vec, np.array([0.0]), np.array([0.5]))
        s2 = solver.solve(warm=(s1.z, s1.y))
        assert s2.z[0] == pytest.approx(0.5, abs=1e-5)

    def test_update_dimension_change_rejected(self):
        rng = np.random.default_rng(21)
        problem = random_qp(rng, 3, 3)
        solver = QpSolver(problem)
        with pytest.raises(QpDimensionError):
            solver.update_vectors(np.zeros(4), problem.lower, problem.upper)
        with pytest.raises(QpDimensionError):
            qp_update_vectors(problem, np.zeros(3), np.zeros(2), np.zeros(2))

    def test_qp_update_vectors_returns_new_problem(self):
        rng = np.random.default_rng(31)
        problem = random_qp(rng, 3, 3)
        new = qp_update_vectors(problem, problem.q_vec * 2, problem.lower, problem.upper)
        assert new is not problem
        np.testing.assert_allclose(new.q_vec, problem.q_vec * 2)


class TestDeterminism:
    def test_bitwise_identical_runs(self):
        rng = np.random.default_rng(200)
        problem = random_qp(rng, 6, 8)
        s1 = QpSolver(problem).solve()
        s2 = QpSolver(problem).solve()
        assert s1.iterations == s2.iterations
        assert np.array_equal(s1.z, s2.z)
        assert np.array_equal(s1.y, s2.y)
        assert s1.primal_res == s2.primal_res
