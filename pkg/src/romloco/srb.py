"""Single-rigid-body model and its decomposed (arms + torso yaw) extension.

The 13-dim SRB state is [p, theta, v, omega, g] with ZYX Euler angles and a
constant gravity entry that keeps the dynamics affine-free.  The decomposed
model appends torso yaw relative to the lower body and two single-axis arm
mass displacements, preserving linear input maps: arm forces act along body x
only, their pitch moments load the whole body while their yaw moments load
the torso coordinate, and the torso actuator applies an equal and opposite
torque pair between torso and lower body.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams

LEFT = "left"
RIGHT = "right"

PITCH_SINGULARITY_MARGIN = 0.01  # [rad] from +-pi/2


class EulerSingularityError(RuntimeError):
    """Pitch too close to +-pi/2 for the ZYX rate map."""


def other_side(side: str) -> str:
    return RIGHT if side == LEFT else LEFT


def gamma_for_side(side: str) -> int:
    """Lateral step direction of the upcoming swing step for a stance side.

    With the right foot in stance the left foot steps out to +y, so gamma is
    +1; mirrored for left stance.
    """
    return 1 if side == RIGHT else -1


@dataclass
class SrbState:
    p_com: np.ndarray                  # COM position, inertial [m]
    theta_com: np.ndarray              # roll, pitch, yaw (ZYX) [rad]
    v_com: np.ndarray                  # COM velocity, inertial [m/s]
    omega_com: np.ndarray              # angular velocity, inertial [rad/s]
    g_entry: float = 9.81              # gravity state entry [m/s^2]

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [self.p_com, self.theta_com, self.v_com, self.omega_com, [self.g_entry]]
        )

    @staticmethod
    def from_array(x: np.ndarray) -> "SrbState":
        x = np.asarray(x, dtype=float)
        return SrbState(
            p_com=x[0:3].copy(),
            theta_com=x[3:6].copy(),
            v_com=x[6:9].copy(),
            omega_com=x[9:12].copy(),
            g_entry=float(x[12]),
        )


@dataclass
class FootWrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))    # [N]
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))   # [N m]

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])


@dataclass
class DsrbState:
    srb: SrbState
    psi_tr: float = 0.0    # torso yaw relative to lower body [rad]
    p_la: float = 0.0      # left arm mass x-displacement from nominal [m]
    p_ra: float = 0.0
    dpsi_tr: float = 0.0   # [rad/s]
    v_la: float = 0.0      # [m/s]
    v_ra: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [
                self.srb.as_array(),
                [self.psi_tr, self.p_la, self.p_ra, self.dpsi_tr, self.v_la, self.v_ra],
            ]
        )

    @staticmethod
    def from_array(x: np.ndarray) -> "DsrbState":
        x = np.asarray(x, dtype=float)
        return DsrbState(
            srb=SrbState.from_array(x[:13]),
            psi_tr=float(x[13]),
            p_la=float(x[14]),
            p_ra=float(x[15]),
            dpsi_tr=float(x[16]),
            v_la=float(x[17]),
            v_ra=float(x[18]),
        )


@dataclass
class DsrbInput:
    left: FootWrench = field(default_factory=FootWrench)
    right: FootWrench = field(default_factory=FootWrench)
    tau_tr: float = 0.0    # torso yaw torque [N m]
    f_la_x: float = 0.0    # left arm reaction force along body x [N]
    f_ra_x: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [
                self.left.as_array(),
                self.right.as_array(),
                [self.tau_tr, self.f_la_x, self.f_ra_x],
            ]
        )

    @staticmethod
    def from_array(u: np.ndarray) -> "DsrbInput":
        u = np.asarray(u, dtype=float)
        return DsrbInput(
            left=FootWrench(force=u[0:3].copy(), moment=u[3:6].copy()),
            right=FootWrench(force=u[6:9].copy(), moment=u[9:12].copy()),
            tau_tr=float(u[12]),
            f_la_x=float(u[13]),
            f_ra_x=float(u[14]),
        )


@dataclass
class StanceInfo:
    side: str                          # "left" | "right"
    p_stf: np.ndarray                  # stance foot position, inertial [m]
    psi_stf: float                     # stance yaw [rad]


def rot_z(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(r: np.ndarray) -> np.ndarray:
    x, y, z = r
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def euler_zyx_to_matrix(theta: np.ndarray) -> np.ndarray:
    """Rotation matrix R = Rz(yaw) Ry(pitch) Rx(roll)."""
    phi, th, psi = theta
    cr, sr = np.cos(phi), np.sin(phi)
    cp, sp = np.cos(th), np.sin(th)
    cy, sy = np.cos(psi), np.sin(psi)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def _euler_rate_map(theta: np.ndarray) -> np.ndarray:
    """E mapping (roll, pitch, yaw) rates to the world angular velocity."""
    _, th, psi = theta
    cp, sp = np.cos(th), np.sin(th)
    cy, sy = np.cos(psi), np.sin(psi)
    return np.array(
        [
            [cy * cp, -sy, 0.0],
            [sy * cp, cy, 0.0],
            [-sp, 0.0, 1.0],
        ]
    )


def _euler_rate_map_inv(theta: np.ndarray) -> np.ndarray:
    """Exact inverse of the ZYX rate map; singular at pitch = +-pi/2."""
    _, th, psi = theta
    cp, sp = np.cos(th), np.sin(th)
    cy, sy = np.cos(psi), np.sin(psi)
    if abs(th) >= np.pi / 2.0 - PITCH_SINGULARITY_MARGIN:
        raise EulerSingularityError(f"pitch {th:.4f} rad at the ZYX rate-map singularity")
    return (1.0 / cp) * np.array(
        [
            [cy, sy, 0.0],
            [-sy * cp, cy * cp, 0.0],
            [cy * sp, sy * sp, cp],
        ]
    )


def check_pitch(theta: np.ndarray) -> None:
    if abs(theta[1]) >= np.pi / 2.0 - PITCH_SINGULARITY_MARGIN:
        raise EulerSingularityError(f"pitch {theta[1]:.4f} rad at the ZYX rate-map singularity")


def srb_derivative(
    x: SrbState,
    u: tuple[FootWrench, FootWrench],
    feet: tuple[np.ndarray, np.ndarray],
    params: ModelParams,
) -> np.ndarray:
    """Nonlinear Newton-Euler time derivative of the 13-dim SRB state.

    Foot forces act at the given foot points (moment arm p_foot - p_com) with
    the body inertia rotated into the inertial frame; the gravity entry is a
    constant state and differentiates to zero.
    """
    theta = x.theta_com
    check_pitch(theta)
    m = params.m_com
    r = euler_zyx_to_matrix(theta)
    i_w = r @ params.i_com_mat @ r.T

    f_tot = np.zeros(3)
    m_tot = np.zeros(3)
    for wrench, p_foot in zip(u, feet):
        f_tot += wrench.force
        m_tot += np.cross(np.asarray(p_foot, dtype=float) - x.p_com, wrench.force)
        m_tot += wrench.moment

    dx = np.zeros(13)
    dx[0:3] = x.v_com
    dx[3:6] = _euler_rate_map_inv(theta) @ x.omega_com
    dx[6:9] = f_tot / m
    dx[8] -= x.g_entry
    dx[9:12] = np.linalg.solve(i_w, m_tot - np.cross(x.omega_com, i_w @ x.omega_com))
    # dx[12] = 0: gravity entry is constant
    return dx


def srb_continuous_jacobians(
    x_ref: SrbState,
    p_stf_ref: np.ndarray,
    params: ModelParams,
    u_ref: tuple[FootWrench, FootWrench] | None = None,
    input_inertia: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians (d xdot / dx, d xdot / du) of the SRB dynamics.

    Both feet use the reference foot point for their moment arms; the columns
    of any swing foot are pinned to zero separately by the MPC constraints.
    ``input_inertia`` overrides the body inertia in the input map only (the
    decomposed model replaces the yaw inertia there).
    """
    from ._kernels import srb_jacobians_core

    theta = np.asarray(x_ref.theta_com, dtype=float)
    check_pitch(theta)
    p_stf_ref = np.asarray(p_stf_ref, dtype=float)
    if u_ref is None:
        u_ref = (FootWrench(), FootWrench())
    ib_diag = np.asarray(params.i_com, dtype=float)
    if input_inertia is None:
        ib_inp_diag = ib_diag
    else:
        ib_inp_diag = np.diagonal(np.asarray(input_inertia, dtype=float)).copy()
    return srb_jacobians_core(
        theta,
        np.asarray(x_ref.omega_com, dtype=float),
        np.asarray(x_ref.p_com, dtype=float),
        p_stf_ref,
        np.asarray(u_ref[0].force, dtype=float),
        np.asarray(u_ref[0].moment, dtype=float),
        np.asarray(u_ref[1].force, dtype=float),
        np.asarray(u_ref[1].moment, dtype=float),
        params.m_com,
        ib_diag,
        ib_inp_diag,
    )


def srb_linearize(
    x_ref: SrbState,
    p_stf_ref: np.ndarray,
    params: ModelParams,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Discrete linearization A_n = I + dt * dxdot/dx, B_n = dt * dxdot/du."""
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    a_c, b_c = srb_continuous_jacobians(x_ref, p_stf_ref, params)
    return np.eye(13) + dt * a_c, dt * b_c


def arm_reaction_wrench(f_x: float, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Force and moment applied to the robot by a single-axis arm force.

    With the arm mass constrained to move along body x at offset r, the cross
    product r x (f_x, 0, 0) keeps only the pitch and yaw moment components.
    """
    r = np.asarray(r, dtype=float)
    force = np.array([f_x, 0.0, 0.0])
    moment = np.array([0.0, r[2] * f_x, -r[1] * f_x])
    return force, moment


def nominal_srb_reference(params: ModelParams) -> SrbState:
    """Upright stance at the nominal COM height, at rest."""
    return SrbState(
        p_com=np.array([0.0, 0.0, params.p_z_des]),
        theta_com=np.zeros(3),
        v_com=np.zeros(3),
        omega_com=np.zeros(3),
        g_entry=params.g,
    )


def dsrb_matrices(
    params: ModelParams,
    x_ref: SrbState | None = None,
    p_stf_ref: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous 19x19 / 19x15 matrices of the decomposed model.

    The top-left block is the SRB Jacobian at the reference (yaw inertia in
    the input map replaced by the lower-body value).  The extension adds the
    arm-gravity pitch coupling, the torso torque pair, the single-axis arm
    force columns, and the integrator identity for the upper-body rates.
    Translational and pitch-moment arm columns rotate with the reference yaw;
    at zero yaw they reduce to the canonical entries.
    """
    if x_ref is None:
        x_ref = nominal_srb_reference(params)
    if p_stf_ref is None:
        p_stf_ref = np.zeros(3)

    i_x, i_y, _ = params.i_com
    i_input = np.diag([i_x, i_y, params.i_lb_z])
    a_srb, b_srb = srb_continuous_jacobians(
        x_ref, p_stf_ref, params, input_inertia=i_input
    )

    theta = x_ref.theta_com
    r = euler_zyx_to_matrix(theta)
    i_w_inv = np.linalg.inv(r @ params.i_com_mat @ r.T)
    i_w_lb_inv = np.linalg.inv(r @ i_input @ r.T)
    rz = rot_z(theta[2])

    a = np.zeros((19, 19))
    b = np.zeros((19, 15))
    a[:13, :13] = a_srb
    b[:13, :12] = b_srb

    # Arm masses displaced along body x create a gravity pitch moment.
    a[9:12, 14] = i_w_inv @ rz @ np.array([0.0, params.m_la * params.g, 0.0])
    a[9:12, 15] = i_w_inv @ rz @ np.array([0.0, params.m_ra * params.g, 0.0])
    # Upper-body kinematics: positions integrate their rates.
    a[13:16, 16:19] = np.eye(3)

    e_z = np.array([0.0, 0.0, 1.0])
    # Torso torque: reaction on the lower body, action on the torso coordinate.
    b[9:12, 12] = i_w_lb_inv @ (-e_z)
    b[16, 12] = 1.0 / params.i_tr_z
    # Arm forces: body-x force and pitch moment on the body, yaw moment on the
    # torso, and the reaction accelerating the arm mass the other way.
    for col, (m_arm, r_arm) in ((13, (params.m_la, params.r_la)),
                                (14, (params.m_ra, params.r_ra))):
        force, moment = arm_reaction_wrench(1.0, np.asarray(r_arm))
        b[6:9, col] = rz @ force / params.m_com
        b[9:12, col] = i_w_inv @ rz @ np.array([0.0, moment[1], 0.0])
        b[16, col] = moment[2] / params.i_tr_z
    b[17, 13] = -1.0 / params.m_la
    b[18, 14] = -1.0 / params.m_ra

    return a, b


def dsrb_linearize(
    x_ref: SrbState,
    p_stf_ref: np.ndarray,
    params: ModelParams,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Discrete 19x19 / 19x15 linearization of the decomposed dynamics."""
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    a_c, b_c = dsrb_matrices(params, x_ref=x_ref, p_stf_ref=p_stf_ref)
    return np.eye(19) + dt * a_c, dt * b_c
