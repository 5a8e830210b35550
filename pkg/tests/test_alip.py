"""ALIP flow, reset, step-to-step map, and HLIP orbit tests."""

from __future__ import annotations

import numpy as np
import pytest

from romloco.alip import (
    AlipState,
    AnkleTorque,
    StepLength,
    B_D,
    alip_flow,
    alip_state_from_robot,
    alip_system_matrices,
    alip_transition,
    alip_transition_derivative,
    desired_step_lengths,
    hlip_period1,
    hlip_period2,
    hlip_to_alip,
    reset,
    s2s,
    transition_batch,
    transition_closed_form,
)
from romloco.params import ModelParams

PARAMS = ModelParams()


def closed_form_phi_block(m, g, pz, t):
    """Independent 2x2 cosh/sinh oracle for the sagittal block."""
    lam = np.sqrt(g / pz)
    return np.array(
        [
            [np.cosh(lam * t), np.sinh(lam * t) / (lam * m * pz)],
            [m * g * np.sinh(lam * t) / lam, np.cosh(lam * t)],
        ]
    )


class TestSystemMatrices:
    def test_entry_pattern(self):
        a, _ = alip_system_matrices(PARAMS)
        assert a[0, 1] == pytest.approx(1.0 / (35.0 * 0.62))
        assert a[1, 0] == pytest.approx(35.0 * 9.81)
        assert a[2, 3] == pytest.approx(-1.0 / (35.0 * 0.62))
        assert a[3, 2] == pytest.approx(-35.0 * 9.81)

    def test_input_matrix_structure(self):
        _, b = alip_system_matrices(PARAMS)
        assert np.all(b[0] == 0.0) and np.all(b[2] == 0.0)
        assert b[1, 0] == 1.0 and b[3, 1] == 1.0

    def test_a_squared_is_lambda_squared_identity(self):
        a, _ = alip_system_matrices(PARAMS)
        lam2 = PARAMS.g / PARAMS.p_z_des
        np.testing.assert_allclose(a @ a, lam2 * np.eye(4), rtol=1e-12)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(m_com=-1.0)
        with pytest.raises(ValueError):
            ModelParams(p_z_des=0.0)


class TestTransition:
    def test_zero_duration(self):
        tr = alip_transition(PARAMS, 0.0)
        np.testing.assert_allclose(tr.phi, np.eye(4), atol=1e-15)
        np.testing.assert_allclose(tr.gamma, np.zeros((4, 2)), atol=1e-15)

    def test_semigroup(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            t1, t2 = rng.uniform(-1.0, 1.0, size=2)
            lhs = alip_transition(PARAMS, t1 + t2).phi
            rhs = alip_transition(PARAMS, t2).phi @ alip_transition(PARAMS, t1).phi
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_matches_cosh_sinh_block_formula(self):
        for t in np.linspace(0.05, 1.0, 50):
            tr = alip_transition(PARAMS, t)
            block = closed_form_phi_block(PARAMS.m_com, PARAMS.g, PARAMS.p_z_des, t)
            np.testing.assert_allclose(tr.phi[:2, :2], block, atol=1e-9)
            phi_cf, gamma_cf = transition_closed_form(PARAMS, t)
            np.testing.assert_allclose(tr.phi, phi_cf, atol=1e-9)
            np.testing.assert_allclose(tr.gamma, gamma_cf, atol=1e-9)

    def test_gamma_consistency(self):
        a, b = alip_system_matrices(PARAMS)
        for t in (0.1, 0.35, 0.8, -0.4):
            tr = alip_transition(PARAMS, t)
            expected = np.linalg.solve(a, tr.phi - np.eye(4)) @ b
            np.testing.assert_allclose(tr.gamma, expected, atol=1e-12)

    def test_batch_matches_scalar(self):
        ts = np.array([-0.3, 0.0, 0.2, 0.62])
        phis, gammas = transition_batch(PARAMS, ts)
        for i, t in enumerate(ts):
            tr = alip_transition(PARAMS, t)
            np.testing.assert_allclose(phis[i], tr.phi, atol=1e-11)
            np.testing.assert_allclose(gammas[i], tr.gamma, atol=1e-11)


class TestTransitionDerivative:
    def test_at_zero_equals_system_matrices(self):
        a, b = alip_system_matrices(PARAMS)
        dphi, dgamma = alip_transition_derivative(PARAMS, 0.0)
        np.testing.assert_allclose(dphi, a, atol=1e-12)
        np.testing.assert_allclose(dgamma, b, atol=1e-12)

    def test_matches_finite_differences(self):
        t, h = 0.3, 1e-6
        hi = alip_transition(PARAMS, t + h)
        lo = alip_transition(PARAMS, t - h)
        dphi_fd = (hi.phi - lo.phi) / (2 * h)
        dgamma_fd = (hi.gamma - lo.gamma) / (2 * h)
        dphi, dgamma = alip_transition_derivative(PARAMS, t)
        np.testing.assert_allclose(dphi, dphi_fd, rtol=1e-6)
        np.testing.assert_allclose(dgamma, dgamma_fd, rtol=1e-6, atol=1e-9)

    def test_derivative_commutes(self):
        a, _ = alip_system_matrices(PARAMS)
        phi = alip_transition(PARAMS, 0.45).phi
        np.testing.assert_allclose(a @ phi, phi @ a, atol=1e-10)


class TestFlow:
    def test_zero_duration_identity(self):
        x0 = AlipState(0.03, -1.2, 0.05, 2.0)
        out = alip_flow(x0, AnkleTorque(), 0.0, PARAMS)
        np.testing.assert_allclose(out.as_array(), x0.as_array(), atol=1e-15)

    def test_closed_form_sagittal(self):
        t = 0.35
        lam = PARAMS.lam
        out = alip_flow(AlipState(0.1, 0.0, 0.0, 0.0), AnkleTorque(), t, PARAMS)
        assert out.p_x == pytest.approx(0.1 * np.cosh(lam * t), rel=1e-10)
        assert out.l_y == pytest.approx(
            0.1 * PARAMS.m_com * PARAMS.g * np.sinh(lam * t) / lam, rel=1e-10
        )
        assert out.p_y == 0.0 and out.l_x == 0.0

    def test_torque_confined_to_sagittal_block(self):
        out = alip_flow(AlipState(0, 0, 0, 0), AnkleTorque(tau_y=1.0), 0.4, PARAMS)
        assert out.p_y == 0.0 and out.l_x == 0.0
        assert out.p_x != 0.0 and out.l_y != 0.0

    def test_backward_forward_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            x0 = AlipState.from_array(rng.normal(size=4))
            tau = AnkleTorque(*rng.normal(size=2))
            t = rng.uniform(0.05, 0.8)
            fwd = alip_flow(x0, tau, t, PARAMS)
            back = alip_flow(fwd, tau, -t, PARAMS)
            np.testing.assert_allclose(back.as_array(), x0.as_array(), atol=1e-9)


class TestReset:
    def test_zero_step_identity(self):
        x = AlipState(0.1, 2.0, -0.05, 1.0)
        out = reset(x, StepLength(0.0, 0.0))
        assert out == x

    def test_direct_substitution(self):
        out = reset(AlipState(0.1, 2.0, -0.05, 1.0), StepLength(0.3, -0.2))
        np.testing.assert_allclose(out.as_array(), [-0.2, 2.0, 0.15, 1.0])

    def test_momenta_bitwise_invariant(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = AlipState.from_array(rng.normal(size=4))
            l = StepLength(*rng.normal(size=2))
            out = reset(x, l)
            assert out.l_y == x.l_y and out.l_x == x.l_x


class TestS2S:
    def test_composes_reset_then_flow(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = AlipState.from_array(rng.normal(size=4) * 0.2)
            tau = AnkleTorque(*rng.normal(size=2))
            l = StepLength(*rng.normal(size=2) * 0.1)
            t = rng.uniform(0.2, 0.6)
            direct = s2s(x, t, tau, l, PARAMS)
            composed = alip_flow(reset(x, l), tau, t, PARAMS)
            np.testing.assert_allclose(direct.as_array(), composed.as_array(), atol=1e-12)

    def test_period1_fixed_point(self):
        t, v = 0.4, 0.3
        target = hlip_period1(t, PARAMS.p_z_des, v, PARAMS.g)
        frontal = hlip_period1(t, PARAMS.p_z_des, 0.0, PARAMS.g)
        frontal.axis = "frontal"
        x = hlip_to_alip(target, frontal, PARAMS)
        out = s2s(x, t, AnkleTorque(), StepLength(v * t, 0.0), PARAMS)
        np.testing.assert_allclose(out.as_array(), x.as_array(), atol=1e-10)

    def test_reduces_to_flow(self):
        x = AlipState(0.05, 1.0, -0.02, 0.5)
        out = s2s(x, 0.3, AnkleTorque(), StepLength(), PARAMS)
        flow = alip_flow(x, AnkleTorque(), 0.3, PARAMS)
        np.testing.assert_allclose(out.as_array(), flow.as_array(), atol=1e-14)

    def test_nonpositive_period_rejected(self):
        with pytest.raises(ValueError):
            s2s(AlipState(0, 0, 0, 0), 0.0, AnkleTorque(), StepLength(), PARAMS)


class TestDesiredStepLengths:
    def test_arithmetic(self):
        l = desired_step_lengths((0.3, 0.0), 0.4, 1, 0.2)
        assert l.l_x == pytest.approx(0.12)
        assert l.l_y == pytest.approx(0.2)

    def test_zero_command(self):
        l = desired_step_lengths((0.0, 0.0), 0.4, -1, 0.2)
        assert l.l_x == 0.0 and l.l_y == pytest.approx(-0.2)

    def test_alternating_sum(self):
        v_y, t = 0.15, 0.4
        l1 = desired_step_lengths((0.0, v_y), t, 1, 0.2)
        l2 = desired_step_lengths((0.0, v_y), t, -1, 0.2)
        assert l1.l_y + l2.l_y == pytest.approx(2 * v_y * t)


def one_step_map(x: np.ndarray, lam: float, t: float, l: float) -> np.ndarray:
    """Nominal HLIP step in (p, v): reset by l, then flow for t."""
    ch, sh = np.cosh(lam * t), np.sinh(lam * t)
    m = np.array([[ch, sh / lam], [lam * sh, ch]])
    return m @ (x - np.array([l, 0.0]))


class TestHlipOrbits:
    def test_period1_stationary(self):
        tgt = hlip_period1(0.4, 0.62, 0.0)
        assert tgt.p_pre == pytest.approx(0.0, abs=1e-14)
        assert tgt.v_pre == pytest.approx(0.0, abs=1e-14)

    def test_period1_closed_form(self):
        t, pz, v = 0.4, 0.62, 0.3
        lam = np.sqrt(9.81 / pz)
        tgt = hlip_period1(t, pz, v)
        assert tgt.p_pre == pytest.approx(v * t / 2.0, rel=1e-12)
        coth = np.cosh(lam * t / 2) / np.sinh(lam * t / 2)
        assert tgt.v_pre == pytest.approx(lam * coth * tgt.p_pre, rel=1e-12)

    def test_period1_is_fixed_point(self):
        t, pz, v = 0.37, 0.62, 0.25
        lam = np.sqrt(9.81 / pz)
        tgt = hlip_period1(t, pz, v)
        x = np.array([tgt.p_pre, tgt.v_pre])
        np.testing.assert_allclose(one_step_map(x, lam, t, v * t), x, atol=1e-10)

    def test_period1_odd_symmetry(self):
        a = hlip_period1(0.4, 0.62, 0.3)
        b = hlip_period1(0.4, 0.62, -0.3)
        assert a.p_pre == pytest.approx(-b.p_pre)
        assert a.v_pre == pytest.approx(-b.v_pre)

    def test_period2_mirror_branches(self):
        a = hlip_period2(0.4, 0.62, 0.0, 0.2, 1)
        b = hlip_period2(0.4, 0.62, 0.0, 0.2, -1)
        assert a.p_pre == pytest.approx(-b.p_pre)
        assert a.v_pre == pytest.approx(-b.v_pre)

    def test_period2_two_step_fixed_point(self):
        t, pz, off = 0.4, 0.62, 0.2
        lam = np.sqrt(9.81 / pz)
        for v in (0.0, 0.1):
            tgt = hlip_period2(t, pz, v, off, 1)
            x = np.array([tgt.p_pre, tgt.v_pre])
            l1 = v * t + off
            l2 = v * t - off
            x2 = one_step_map(x, lam, t, l1)
            x_back = one_step_map(x2, lam, t, l2)
            np.testing.assert_allclose(x_back, x, atol=1e-10)

    def test_period2_not_period1_when_moving(self):
        t, pz, off, v = 0.4, 0.62, 0.2, 0.1
        lam = np.sqrt(9.81 / pz)
        tgt = hlip_period2(t, pz, v, off, 1)
        x = np.array([tgt.p_pre, tgt.v_pre])
        x1 = one_step_map(x, lam, t, v * t + off)
        assert np.linalg.norm(x1 - x) > 1e-3


class TestHlipToAlip:
    def test_zero_passthrough(self):
        sag = hlip_period1(0.4, 0.62, 0.0)
        front = hlip_period2(0.4, 0.62, 0.0, 0.2, 1)
        front.p_pre, front.v_pre = 0.0, 0.0
        out = hlip_to_alip(sag, front, PARAMS)
        np.testing.assert_allclose(out.as_array(), np.zeros(4), atol=1e-14)

    def test_momentum_scaling(self):
        sag = hlip_period1(0.4, 0.62, 0.3)
        front = hlip_period1(0.4, 0.62, 0.0)
        out = hlip_to_alip(sag, front, PARAMS)
        assert out.l_y == pytest.approx(35.0 * 0.62 * sag.v_pre)

    def test_frontal_sign(self):
        sag = hlip_period1(0.4, 0.62, 0.0)
        front = hlip_period1(0.4, 0.62, 0.2)  # v_pre > 0
        front.axis = "frontal"
        out = hlip_to_alip(sag, front, PARAMS)
        assert front.v_pre > 0.0
        assert out.l_x < 0.0


class TestAlipFromRobot:
    def test_pure_forward_motion(self):
        out = alip_state_from_robot(
            np.array([0.0, 0.0, 0.62]), np.array([0.3, 0.0, 0.0]), np.zeros(3), PARAMS
        )
        assert out.l_y == pytest.approx(35.0 * 0.62 * 0.3)
        assert out.l_x == pytest.approx(0.0)

    def test_pure_pitch_rate(self):
        out = alip_state_from_robot(np.zeros(3), np.zeros(3), np.array([0.0, 0.7, 0.0]), PARAMS)
        assert out.l_y == pytest.approx(PARAMS.i_com[1] * 0.7)

    def test_matches_rigid_momentum_oracle(self):
        rng = np.random.default_rng(17)
        i_b = PARAMS.i_com_mat
        for _ in range(20):
            p = rng.normal(size=3) * 0.3
            v = rng.normal(size=3)
            w = rng.normal(size=3)
            # point mass plus rotor: L = m (p x v) + I w about the stance point
            l_full = PARAMS.m_com * np.cross(p, v) + i_b @ w
            out = alip_state_from_robot(p, v, w, PARAMS)
            assert out.l_y == pytest.approx(l_full[1], rel=1e-12)
            assert out.l_x == pytest.approx(l_full[0], rel=1e-12)
            assert out.p_x == pytest.approx(p[0]) and out.p_y == pytest.approx(p[1])


class TestStateValidation:
    def test_sanity_bound(self):
        with pytest.raises(ValueError):
            AlipState(3.0, 0.0, 0.0, 0.0).validate()
        with pytest.raises(ValueError):
            AlipState(np.nan, 0.0, 0.0, 0.0).validate()
        AlipState(0.5, 10.0, -0.5, 5.0).validate()
