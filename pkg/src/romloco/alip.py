"""ALIP and HLIP pendulum models: flows, resets, step-to-step maps, orbits.

The ALIP state is x = (p_x, L_y, p_y, L_x): horizontal COM position relative
to the stance foot and angular momentum about the stance foot.  The continuous
dynamics during a step are linear, xdot = A x + B tau, and decouple into a
sagittal (p_x, L_y) and a frontal (p_y, L_x) 2x2 block.  Each block satisfies
A^2 = (g / p_z) I, so the matrix exponential has a cosh/sinh closed form that
we use as an independent check and as the vectorized fast path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .params import ModelParams

# Reset input matrix: a step of length (l_x, l_y) moves the stance frame, so
# positions shift by -l while angular momenta are conserved.
B_D = np.array(
    [
        [-1.0, 0.0],
        [0.0, 0.0],
        [0.0, -1.0],
        [0.0, 0.0],
    ]
)

POSITION_SANITY_BOUND = 2.0  # [m], |p_x|, |p_y| above this is a state error


@dataclass
class AlipState:
    p_x: float
    l_y: float
    p_y: float
    l_x: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_x, self.l_y, self.p_y, self.l_x])

    @staticmethod
    def from_array(x: np.ndarray) -> "AlipState":
        return AlipState(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def validate(self, bound: float = POSITION_SANITY_BOUND) -> None:
        x = self.as_array()
        if not np.all(np.isfinite(x)):
            raise ValueError(f"non-finite ALIP state {x}")
        if abs(self.p_x) > bound or abs(self.p_y) > bound:
            raise ValueError(f"ALIP positions out of sanity bound: {x}")


@dataclass
class AnkleTorque:
    tau_y: float = 0.0  # sagittal stance-ankle torque [N m]
    tau_x: float = 0.0  # frontal stance-ankle torque [N m]

    def as_array(self) -> np.ndarray:
        return np.array([self.tau_y, self.tau_x])


@dataclass
class StepLength:
    l_x: float = 0.0  # landing displacement in the stance yaw frame [m]
    l_y: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.l_x, self.l_y])


@dataclass
class AlipTransition:
    """State transition Phi and input map Gamma over one flow interval."""

    phi: np.ndarray       # 4x4
    gamma: np.ndarray     # 4x2
    duration: float       # [s]
    lam: float            # pendulum constant sqrt(g / p_z) [1/s]


@dataclass
class HlipOrbitTarget:
    """Pre-impact fixed point of a nominal HLIP gait in one plane."""

    p_pre: float          # pre-impact COM position relative to stance [m]
    v_pre: float          # pre-impact COM velocity [m/s]
    axis: str             # "sagittal" | "frontal"
    orbit: str            # "period-1" | "period-2"


def alip_system_matrices(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous ALIP matrices A (4x4) and B (4x2)."""
    m, g, pz = params.m_com, params.g, params.p_z_des
    a = np.array(
        [
            [0.0, 1.0 / (m * pz), 0.0, 0.0],
            [m * g, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0 / (m * pz)],
            [0.0, 0.0, -m * g, 0.0],
        ]
    )
    b = np.array(
        [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 0.0],
            [0.0, 1.0],
        ]
    )
    return a, b


def alip_transition(params: ModelParams, t: float) -> AlipTransition:
    """Flow maps Phi(t) = exp(A t) and Gamma(t) = A^-1 (Phi - I) B.

    Negative t is allowed and used to flow references backward in time.  A is
    invertible (each 2x2 block has determinant -g/p_z), so Gamma is exact.
    """
    if not np.isfinite(t):
        raise ValueError("duration must be finite")
    a, b = alip_system_matrices(params)
    phi = expm(a * t)
    gamma = np.linalg.solve(a, (phi - np.eye(4))) @ b
    return AlipTransition(phi=phi, gamma=gamma, duration=float(t), lam=params.lam)


def transition_closed_form(params: ModelParams, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Cosh/sinh closed form of (Phi, Gamma), from A^2 = lam^2 I per block."""
    phi, gamma = transition_batch(params, np.array([t]))
    return phi[0], gamma[0]


def transition_batch(params: ModelParams, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized closed-form (Phi, Gamma) for an array of durations."""
    t = np.asarray(t, dtype=float)
    m, g, pz = params.m_com, params.g, params.p_z_des
    lam = params.lam
    ch = np.cosh(lam * t)
    sh = np.sinh(lam * t)
    n = t.shape[0]
    phi = np.zeros((n, 4, 4))
    # sagittal block (p_x, L_y)
    phi[:, 0, 0] = ch
    phi[:, 0, 1] = sh / (lam * m * pz)
    phi[:, 1, 0] = m * g * sh / lam
    phi[:, 1, 1] = ch
    # frontal block (p_y, L_x): same diagonal, mirrored coupling signs
    phi[:, 2, 2] = ch
    phi[:, 2, 3] = -sh / (lam * m * pz)
    phi[:, 3, 2] = -m * g * sh / lam
    phi[:, 3, 3] = ch
    # Gamma = A^-1 (Phi - I) B, expanded per block:
    #   block A1^-1 = [[0, 1/(m g)], [m pz, 0]], B selects the momentum row.
    gamma = np.zeros((n, 4, 2))
    gamma[:, 0, 0] = (ch - 1.0) / (m * g)
    gamma[:, 1, 0] = sh / lam
    gamma[:, 2, 1] = -(ch - 1.0) / (m * g)
    gamma[:, 3, 1] = sh / lam
    return phi, gamma


def alip_transition_derivative(
    params: ModelParams, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """d Phi / dT = A Phi(T) and d Gamma / dT = Phi(T) B.

    These are the exact sensitivities of the flow maps with respect to the
    step period, used by the planner's SQP constraint Jacobians.
    """
    a, b = alip_system_matrices(params)
    tr = alip_transition(params, t)
    return a @ tr.phi, tr.phi @ b


def alip_flow(
    x0: AlipState, tau: AnkleTorque, t: float, params: ModelParams
) -> AlipState:
    """Flow the ALIP state forward by t under constant ankle torque."""
    tr = alip_transition(params, t)
    x = tr.phi @ x0.as_array() + tr.gamma @ tau.as_array()
    return AlipState.from_array(x)


def reset(x_pre: AlipState, l: StepLength) -> AlipState:
    """Stance switch: positions shift by the step length, momenta carry over."""
    return AlipState(
        p_x=x_pre.p_x - l.l_x,
        l_y=x_pre.l_y,
        p_y=x_pre.p_y - l.l_y,
        l_x=x_pre.l_x,
    )


def s2s(
    x_pre: AlipState,
    t: float,
    tau: AnkleTorque,
    l: StepLength,
    params: ModelParams,
) -> AlipState:
    """Step-to-step map between consecutive pre-impact states.

    Composition of the stance switch at the impact and the flow over the next
    step: x_next = Phi(T) (x_pre + B_d l) + Gamma(T) tau.
    """
    if t <= 0.0:
        raise ValueError(f"step period must be positive, got {t}")
    tr = alip_transition(params, t)
    x = tr.phi @ (x_pre.as_array() + B_D @ l.as_array()) + tr.gamma @ tau.as_array()
    return AlipState.from_array(x)


def desired_step_lengths(
    v_cmd: tuple[float, float], t_des: float, gamma: int, l_y_offset: float
) -> StepLength:
    """Nominal step lengths for a velocity command and step width offset."""
    if t_des <= 0.0:
        raise ValueError("desired step period must be positive")
    if gamma not in (-1, 1):
        raise ValueError("stance indicator must be -1 or +1")
    return StepLength(
        l_x=v_cmd[0] * t_des,
        l_y=v_cmd[1] * t_des + l_y_offset * gamma,
    )


def _plane_flow_matrix(lam: float, t: float) -> np.ndarray:
    """2x2 flow of a single-plane LIP in (position, velocity) coordinates."""
    ch, sh = np.cosh(lam * t), np.sinh(lam * t)
    return np.array([[ch, sh / lam], [lam * sh, ch]])


def hlip_period1(t_ssp: float, p_z: float, v_cmd: float, g: float = 9.81) -> HlipOrbitTarget:
    """Period-1 orbit target: the pre-impact state fixed under one nominal step.

    The nominal step resets with l = v_cmd * T and flows for T with no input;
    the mean horizontal velocity of the resulting gait equals v_cmd.
    """
    if t_ssp <= 0.0:
        raise ValueError("single-support period must be positive")
    lam = np.sqrt(g / p_z)
    m = _plane_flow_matrix(lam, t_ssp)
    l = v_cmd * t_ssp
    # Fixed point of x = M (x - e l): (I - M) x = -M e l.
    e = np.array([l, 0.0])
    x = np.linalg.solve(np.eye(2) - m, -m @ e)
    return HlipOrbitTarget(p_pre=float(x[0]), v_pre=float(x[1]), axis="sagittal", orbit="period-1")


def hlip_period2(
    t_ssp: float,
    p_z: float,
    v_cmd: float,
    l_y_offset: float,
    gamma: int,
    g: float = 9.81,
) -> HlipOrbitTarget:
    """Period-2 orbit target: fixed point of two alternating nominal steps.

    The returned branch is the pre-impact state whose upcoming step uses
    l = v_cmd * T + l_y_offset * gamma; the other branch follows by symmetry.
    """
    if t_ssp <= 0.0:
        raise ValueError("single-support period must be positive")
    if l_y_offset <= 0.0:
        raise ValueError("step width offset must be positive")
    if gamma not in (-1, 1):
        raise ValueError("stance indicator must be -1 or +1")
    lam = np.sqrt(g / p_z)
    m = _plane_flow_matrix(lam, t_ssp)
    l_a = v_cmd * t_ssp + l_y_offset * gamma
    l_b = v_cmd * t_ssp - l_y_offset * gamma
    # Two-step composition from the returned branch:
    #   x_b = M (x_a - e l_a),  x_a = M (x_b - e l_b)
    # so (I - M^2) x_a = -(M^2 e l_a + M e l_b).
    e = np.array([1.0, 0.0])
    m2 = m @ m
    rhs = -(m2 @ e) * l_a - (m @ e) * l_b
    x = np.linalg.solve(np.eye(2) - m2, rhs)
    return HlipOrbitTarget(p_pre=float(x[0]), v_pre=float(x[1]), axis="frontal", orbit="period-2")


def hlip_to_alip(
    sagittal: HlipOrbitTarget, frontal: HlipOrbitTarget, params: ModelParams
) -> AlipState:
    """Convert HLIP (position, velocity) targets to an ALIP target state.

    Positions pass through; velocities map to angular momenta about the stance
    foot via m * p_z, with the frontal sign flipped (positive v_y means the
    COM rotates negatively about the x-axis).
    """
    mpz = params.m_com * params.p_z_des
    return AlipState(
        p_x=sagittal.p_pre,
        l_y=mpz * sagittal.v_pre,
        p_y=frontal.p_pre,
        l_x=-mpz * frontal.v_pre,
    )


def alip_state_from_robot(
    p_rel: np.ndarray,
    v: np.ndarray,
    omega: np.ndarray,
    params: ModelParams,
) -> AlipState:
    """Extract the ALIP state from the robot's COM kinematics.

    The angular momentum about the stance foot combines the point-mass term
    m (p_rel x v) with the body's own angular momentum I omega; only the
    dominant terms in each plane are kept.
    """
    m = params.m_com
    i_x, i_y, _ = params.i_com
    p_rel = np.asarray(p_rel, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    l_y = m * p_rel[2] * v[0] - m * p_rel[0] * v[2] + i_y * omega[1]
    l_x = -m * p_rel[2] * v[1] + m * p_rel[1] * v[2] + i_x * omega[0]
    return AlipState(p_x=float(p_rel[0]), l_y=float(l_y), p_y=float(p_rel[1]), l_x=float(l_x))
