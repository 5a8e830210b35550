"""Step-planner NMPC tests, including the condensed convex-QP oracle."""

from __future__ import annotations

import numpy as np
import pytest

from romloco.alip import AlipState, B_D, alip_transition
from romloco.params import ModelParams
from romloco.planner import (
    InfeasibleWindowError,
    PlannerConfig,
    PlannerQuery,
    S2SPlan,
    StepPlanner,
    build_step_references,
    nominal_orbit_state,
    solve_nmpc,
    warm_start_shift,
)

PARAMS = ModelParams()


def make_query(v_cmd=(0.0, 0.0), t_curr=0.0, side="right", config=None, kick=None):
    config = config or PlannerConfig()
    x0 = nominal_orbit_state(t_curr, side, v_cmd, config, PARAMS)
    if kick is not None:
        arr = x0.as_array() + np.asarray(kick)
        x0 = AlipState.from_array(arr)
    return PlannerQuery(x0=x0, t_curr=t_curr, stance_side=side, v_cmd=v_cmd)


class TestBuildReferences:
    def test_stationary_alternation(self):
        q = make_query()
        refs = build_step_references(q, PlannerConfig(), PARAMS)
        np.testing.assert_allclose(refs.l_des[:, 0], 0.0, atol=1e-14)
        widths = refs.l_des[:, 1]
        assert np.all(np.abs(widths) == pytest.approx(0.2))
        assert np.all(np.sign(widths[1:]) == -np.sign(widths[:-1]))
        lat = refs.x_des[:, 2]
        assert np.all(np.sign(lat[1:]) == -np.sign(lat[:-1]))

    def test_forward_step_length(self):
        q = make_query(v_cmd=(0.3, 0.0))
        refs = build_step_references(q, PlannerConfig(), PARAMS)
        np.testing.assert_allclose(refs.l_des[:, 0], 0.12, atol=1e-14)

    def test_targets_satisfy_step_map(self):
        cfg = PlannerConfig()
        for v_cmd in ((0.0, 0.0), (0.3, 0.1)):
            q = make_query(v_cmd=v_cmd)
            refs = build_step_references(q, cfg, PARAMS)
            phi = alip_transition(PARAMS, cfg.t_des).phi
            for k in range(1, cfg.k_steps):
                pred = phi @ (refs.x_des[k - 1] + B_D @ refs.l_des[k])
                np.testing.assert_allclose(pred, refs.x_des[k], atol=1e-10)


class TestOnOrbit:
    def test_orbit_idempotence(self):
        cfg = PlannerConfig()
        planner = StepPlanner(cfg, PARAMS)
        plan = planner.solve(make_query())
        stats = plan.solver_stats
        assert stats.converged
        np.testing.assert_allclose(plan.t, cfg.t_des, atol=1e-7)
        assert stats.cost <= 1e-8
        assert np.abs(plan.tau).max() <= 1e-6

    def test_orbit_idempotence_walking(self):
        cfg = PlannerConfig()
        plan = solve_nmpc(make_query(v_cmd=(0.3, 0.0)), cfg, PARAMS)
        assert plan.solver_stats.cost <= 1e-8
        np.testing.assert_allclose(plan.t, cfg.t_des, atol=1e-7)

    def test_velocity_tracking_nominal(self):
        cfg = PlannerConfig()
        plan = solve_nmpc(make_query(v_cmd=(0.3, 0.0)), cfg, PARAMS)
        ratios = plan.l[:, 0] / plan.t
        assert np.mean(ratios) == pytest.approx(0.3, rel=0.05)


def condensed_convex_oracle(query, config, params):
    """Objective of the T-frozen planner problem via state condensation.

    States are eliminated through the (now linear) step map so the problem
    reduces to a dense QP over (l, tau); solved with cvxpy as an independent
    route.
    """
    import cvxpy as cp

    from romloco.planner import build_step_references

    k_steps = config.k_steps
    refs = build_step_references(query, config, params)
    t_fix = config.t_des
    phi0 = alip_transition(params, t_fix - query.t_curr)
    phi = alip_transition(params, t_fix)

    l_var = cp.Variable((k_steps, 2))
    tau_var = cp.Variable((k_steps, 2))
    # condensation: x_1 = Phi0 x0 + Gamma0 tau_0; x_{k+1} = Phi (x_k + Bd l_k) + Gamma tau_k
    x_expr = [phi0.phi @ query.x0.as_array() + phi0.gamma @ tau_var[0]]
    for k in range(1, k_steps):
        x_expr.append(phi.phi @ (x_expr[k - 1] + B_D @ l_var[k]) + phi.gamma @ tau_var[k])

    qx = np.asarray(config.q_x)
    rl = np.asarray(config.r_l)
    rtau = np.asarray(config.r_tau)
    cost = 0
    constraints = []
    for k in range(k_steps):
        dx = x_expr[k] - refs.x_des[k]
        cost += cp.sum(cp.multiply(qx, cp.square(dx)))
        cost += cp.sum(cp.multiply(rl, cp.square(l_var[k] - refs.l_des[k])))
        cost += cp.sum(cp.multiply(rtau, cp.square(tau_var[k])))
        constraints += [
            x_expr[k] >= np.asarray(config.x_lb),
            x_expr[k] <= np.asarray(config.x_ub),
        ]
        lo, hi = config.step_length_bounds(int(refs.gammas[k]))
        constraints += [l_var[k] >= lo, l_var[k] <= hi]
        constraints += [tau_var[k] >= -config.tau_bound, tau_var[k] <= config.tau_bound]
    prob = cp.Problem(cp.Minimize(cost), constraints)
    prob.solve(
        solver=cp.CLARABEL,
        tol_gap_abs=1e-12,
        tol_gap_rel=1e-12,
        tol_feas=1e-12,
    )
    assert prob.status == "optimal", prob.status
    return float(prob.value)


def exact_condensed_objective(query, config, params, l, tau):
    """Objective of inputs (l, tau) with states rolled out exactly."""
    refs = build_step_references(query, config, params)
    phi0 = alip_transition(params, config.t_des - query.t_curr)
    phi = alip_transition(params, config.t_des)
    qx = np.asarray(config.q_x)
    rl = np.asarray(config.r_l)
    rtau = np.asarray(config.r_tau)
    x = phi0.phi @ query.x0.as_array() + phi0.gamma @ tau[0]
    cost = 0.0
    for k in range(config.k_steps):
        if k > 0:
            x = phi.phi @ (x + B_D @ l[k]) + phi.gamma @ tau[k]
        cost += qx @ (x - refs.x_des[k]) ** 2
        cost += rl @ (l[k] - refs.l_des[k]) ** 2
        cost += rtau @ tau[k] ** 2
    return float(cost)


class TestConvexOracleEquivalence:
    def test_fixed_period_matches_condensed_qp(self):
        rng = np.random.default_rng(71)
        cfg = PlannerConfig(t_lb=0.4, t_ub=0.4, t_des=0.4)
        planner = StepPlanner(cfg, PARAMS)
        for trial in range(20):
            side = "right" if trial % 2 == 0 else "left"
            v_cmd = tuple(rng.uniform(-0.3, 0.3, size=2))
            t_curr = float(rng.uniform(0.0, 0.3))
            kick = rng.normal(size=4) * np.array([0.03, 2.0, 0.03, 2.0])
            q = make_query(v_cmd=v_cmd, t_curr=t_curr, side=side, config=cfg, kick=kick)
            plan = planner.solve(q)
            assert plan.solver_stats.converged, f"trial {trial} did not converge"
            oracle_obj = condensed_convex_oracle(q, cfg, PARAMS)
            ours = exact_condensed_objective(q, cfg, PARAMS, plan.l, plan.tau)
            assert ours == pytest.approx(oracle_obj, abs=1e-5)
            assert plan.solver_stats.cost == pytest.approx(ours, abs=1e-4)


class TestDisturbanceResponse:
    def test_lateral_push_shortens_step_and_widens(self):
        cfg = PlannerConfig()
        planner = StepPlanner(cfg, PARAMS)
        base = planner.solve(make_query(t_curr=0.1))
        t0_seq, ly_seq = [], []
        # kick angular momentum toward the swing side (right stance steps left)
        for kick in (0.0, -3.0, -6.0, -9.0):
            q = make_query(t_curr=0.1, kick=np.array([0.0, 0.0, 0.0, kick]))
            plan = planner.solve(q, warm=base)
            t0_seq.append(plan.t[0])
            ly_seq.append(abs(plan.l[1, 1]))
        assert all(t0_seq[i + 1] <= t0_seq[i] + 1e-9 for i in range(3))
        assert t0_seq[-1] == pytest.approx(cfg.t_lb, abs=1e-6)
        assert all(ly_seq[i + 1] >= ly_seq[i] - 1e-9 for i in range(3))
        assert ly_seq[-1] > abs(base.l[1, 1]) + 0.01


class TestPlanInvariants:
    def test_bounds_and_residual(self):
        cfg = PlannerConfig()
        planner = StepPlanner(cfg, PARAMS)
        rng = np.random.default_rng(13)
        for _ in range(10):
            kick = rng.normal(size=4) * np.array([0.05, 3.0, 0.05, 3.0])
            t_curr = float(rng.uniform(0.0, 0.25))
            q = make_query(t_curr=t_curr, kick=kick)
            plan = planner.solve(q)
            stats = plan.solver_stats
            if stats.converged:
                assert stats.dynamics_residual <= 1e-6
            assert np.all(plan.t >= cfg.t_lb - 1e-12)
            assert np.all(plan.t <= cfg.t_ub + 1e-12)
            assert plan.t[0] >= t_curr + cfg.min_remaining - 1e-12
            assert np.all(np.abs(plan.tau) <= cfg.tau_bound + 1e-12)
            assert np.all(plan.x_pre >= np.asarray(cfg.x_lb) - 1e-12)
            assert np.all(plan.x_pre <= np.asarray(cfg.x_ub) + 1e-12)

    def test_merit_monotone_on_accepted_steps(self):
        cfg = PlannerConfig()
        planner = StepPlanner(cfg, PARAMS)
        q = make_query(t_curr=0.1, kick=np.array([0.05, 4.0, -0.03, -5.0]))
        plan = planner.solve(q)
        for before, after in plan.solver_stats.merit_history:
            assert after <= before + 1e-9

    def test_determinism(self):
        cfg = PlannerConfig()
        q = make_query(t_curr=0.15, kick=np.array([0.02, 1.0, 0.01, -2.0]))
        p1 = solve_nmpc(q, cfg, PARAMS)
        p2 = solve_nmpc(q, cfg, PARAMS)
        assert np.array_equal(p1.x_pre, p2.x_pre)
        assert np.array_equal(p1.l, p2.l)
        assert np.array_equal(p1.t, p2.t)
        assert np.array_equal(p1.tau, p2.tau)

    def test_infeasible_window_raises(self):
        cfg = PlannerConfig(t_lb=0.35, t_ub=0.35, t_des=0.35)
        x0 = nominal_orbit_state(0.32, "left", (0.0, 0.0), cfg, PARAMS)
        q = PlannerQuery(x0=x0, t_curr=0.32, stance_side="left")
        with pytest.raises(InfeasibleWindowError):
            solve_nmpc(q, cfg, PARAMS)


class TestWarmStartShift:
    def test_identity_when_not_stepped(self):
        cfg = PlannerConfig()
        plan = solve_nmpc(make_query(), cfg, PARAMS)
        guess = warm_start_shift(plan, elapsed=0.0, stepped=False)
        np.testing.assert_array_equal(guess.x_pre, plan.x_pre)
        np.testing.assert_array_equal(guess.t, plan.t)

    def test_rotation_when_stepped(self):
        cfg = PlannerConfig()
        plan = solve_nmpc(make_query(v_cmd=(0.2, 0.0)), cfg, PARAMS)
        guess = warm_start_shift(plan, elapsed=plan.t[0], stepped=True)
        np.testing.assert_allclose(guess.x_pre[0], plan.x_pre[1])
        np.testing.assert_allclose(guess.l[0], plan.l[1])
        np.testing.assert_allclose(guess.t[:-1], plan.t[1:])
        np.testing.assert_allclose(guess.t[-1], plan.t[-1])
        assert guess.stance_sides[0] != plan.stance_sides[0]

    def test_warm_start_reduces_iterations(self):
        cfg = PlannerConfig()
        planner = StepPlanner(cfg, PARAMS)
        kick = np.array([0.0, 0.0, 0.0, -4.0])
        q1 = make_query(t_curr=0.1, kick=kick)
        plan1 = planner.solve(q1)
        q2 = make_query(t_curr=0.125, kick=kick)
        warm = warm_start_shift(plan1, elapsed=0.025, stepped=False)
        plan_warm = planner.solve(q2, warm=warm)
        plan_cold = planner.solve(q2)
        assert plan_warm.solver_stats.qp_iterations <= plan_cold.solver_stats.qp_iterations
