"""Converts a step plan into node schedules and rigid-body reference trajectories.

Nodes advance in wall time from the query instant; each node belongs to the
step whose impact is the next one at or after it, and carries the remaining
time-until-impact.  Pendulum references flow backward from the planned
pre-impact states, then compose with the stance footprint chain into full
rigid-body references for the mid-level controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alip import transition_batch
from .params import ModelParams
from .planner import S2SPlan
from .srb import SrbState, rot_z


@dataclass
class NodeSchedule:
    dt_seq: np.ndarray         # (N,) node durations [s]
    step_of_node: np.ndarray   # (N,) step index k_n
    t2i: np.ndarray            # (N,) time until that step's impact [s]
    contact: list[str]         # (N,) stance side at each node
    truncated: bool = False    # horizon ran past the plan and held its last step


@dataclass
class SrbReferenceTrajectory:
    x_ref: np.ndarray          # (N, 13) rigid-body references
    p_stf_ref: np.ndarray      # (N, 3) stance foot positions
    psi_stf_ref: np.ndarray    # (N,) stance yaws
    schedule: NodeSchedule

    @property
    def n_nodes(self) -> int:
        return self.x_ref.shape[0]


def yaw_schedule(omega_cmd: float, plan: S2SPlan, psi0: float) -> np.ndarray:
    """Stance yaw for each planned step: increments of omega_cmd per period."""
    k = plan.k_steps
    yaws = np.empty(k)
    yaws[0] = psi0
    for i in range(1, k):
        yaws[i] = yaws[i - 1] + omega_cmd * plan.t[i - 1]
    return yaws


def stance_positions(plan: S2SPlan, yaws: np.ndarray) -> np.ndarray:
    """Inertial xy stance positions; the current stance foot is the origin."""
    k = plan.k_steps
    pos = np.zeros((k, 2))
    for i in range(1, k):
        c, s = np.cos(yaws[i - 1]), np.sin(yaws[i - 1])
        rz = np.array([[c, -s], [s, c]])
        pos[i] = pos[i - 1] + rz @ plan.l[i]
    return pos


def schedule_nodes(
    plan: S2SPlan, dt: float, n_nodes: int, t_curr: float
) -> NodeSchedule:
    """Assign horizon nodes to steps and compute their time-until-impact."""
    if dt <= 0.0:
        raise ValueError("node period must be positive")
    k = plan.k_steps
    impacts = np.empty(k)
    impacts[0] = plan.t[0] - t_curr
    for i in range(1, k):
        impacts[i] = impacts[i - 1] + plan.t[i]

    step_of_node = np.empty(n_nodes, dtype=int)
    t2i = np.empty(n_nodes)
    contact: list[str] = []
    truncated = False
    extended = list(impacts)
    for n in range(n_nodes):
        t_n = n * dt
        idx = int(np.searchsorted(np.asarray(extended), t_n - 1e-12))
        if idx >= k:
            # horizon beyond the plan: hold the last step
            truncated = True
            while idx >= len(extended):
                extended.append(extended[-1] + plan.t[-1])
            step_of_node[n] = k - 1
            t2i[n] = extended[idx] - t_n
            contact.append(plan.stance_sides[-1])
        else:
            step_of_node[n] = idx
            t2i[n] = impacts[idx] - t_n
            contact.append(plan.stance_sides[idx])
    return NodeSchedule(
        dt_seq=np.full(n_nodes, dt),
        step_of_node=step_of_node,
        t2i=np.maximum(t2i, 0.0),
        contact=contact,
        truncated=truncated,
    )


def alip_ref_at_node(
    plan: S2SPlan, schedule: NodeSchedule, n: int, params: ModelParams
) -> np.ndarray:
    """Pendulum reference at one node: backward flow from its pre-impact state."""
    k_n = int(schedule.step_of_node[n])
    phi, gamma = transition_batch(params, np.array([-schedule.t2i[n]]))
    return phi[0] @ plan.x_pre[k_n] + gamma[0] @ plan.tau[k_n]


def assemble_srb_refs(
    plan: S2SPlan,
    yaws: np.ndarray,
    stance_xy: np.ndarray,
    schedule: NodeSchedule,
    v_hlip: np.ndarray,
    omega_cmd: float,
    params: ModelParams,
    p_z_des: float | None = None,
) -> SrbReferenceTrajectory:
    """Full rigid-body references at every node.

    ``v_hlip`` holds the per-step desired pendulum velocity (stance frame,
    constant within each step).  Positions compose the stance chain with the
    rotated pendulum offset; yaw interpolates along the stance schedule at
    the commanded turn rate.
    """
    if p_z_des is None:
        p_z_des = params.p_z_des
    n_nodes = schedule.t2i.shape[0]
    phis, gammas = transition_batch(params, -schedule.t2i)
    steps = schedule.step_of_node
    x_alip = (
        np.einsum("nij,nj->ni", phis, plan.x_pre[steps])
        + np.einsum("nij,nj->ni", gammas, plan.tau[steps])
    )

    x_ref = np.zeros((n_nodes, 13))
    p_stf_ref = np.zeros((n_nodes, 3))
    psi_stf = yaws[steps]
    cos_y, sin_y = np.cos(psi_stf), np.sin(psi_stf)

    p_stf_ref[:, 0] = stance_xy[steps, 0]
    p_stf_ref[:, 1] = stance_xy[steps, 1]
    # COM xy: stance position plus yaw-rotated pendulum offset
    x_ref[:, 0] = p_stf_ref[:, 0] + cos_y * x_alip[:, 0] - sin_y * x_alip[:, 2]
    x_ref[:, 1] = p_stf_ref[:, 1] + sin_y * x_alip[:, 0] + cos_y * x_alip[:, 2]
    x_ref[:, 2] = p_z_des
    # yaw interpolates within each step at the commanded rate
    elapsed = plan.t[steps] - schedule.t2i
    x_ref[:, 5] = psi_stf + omega_cmd * elapsed
    # velocity: per-step desired pendulum velocity, rotated
    vx, vy = v_hlip[steps, 0], v_hlip[steps, 1]
    x_ref[:, 6] = cos_y * vx - sin_y * vy
    x_ref[:, 7] = sin_y * vx + cos_y * vy
    x_ref[:, 11] = omega_cmd
    x_ref[:, 12] = params.g
    return SrbReferenceTrajectory(
        x_ref=x_ref,
        p_stf_ref=p_stf_ref,
        psi_stf_ref=psi_stf,
        schedule=schedule,
    )


def _quintic(p0, v0, a0, p1, v1, a1, duration):
    """Quintic coefficients matching position, velocity, acceleration ends."""
    t = max(duration, 1e-9)
    c0, c1, c2 = p0, v0, 0.5 * a0
    m = np.array(
        [
            [t**3, t**4, t**5],
            [3 * t**2, 4 * t**3, 5 * t**4],
            [6 * t, 12 * t**2, 20 * t**3],
        ]
    )
    b = np.array(
        [
            p1 - (c0 + c1 * t + c2 * t**2),
            v1 - (c1 + 2 * c2 * t),
            a1 - 2 * c2,
        ]
    )
    c3, c4, c5 = np.linalg.solve(m, b)
    return np.array([c0, c1, c2, c3, c4, c5])


def _poly_eval(c, s):
    p = c[0] + c[1] * s + c[2] * s**2 + c[3] * s**3 + c[4] * s**4 + c[5] * s**5
    v = c[1] + 2 * c[2] * s + 3 * c[3] * s**2 + 4 * c[4] * s**3 + 5 * c[5] * s**4
    return p, v


def _cubic(p0, v0, p1, v1, duration):
    t = max(duration, 1e-9)
    c0, c1 = p0, v0
    m = np.array([[t**2, t**3], [2 * t, 3 * t**2]])
    b = np.array([p1 - (c0 + c1 * t), v1 - c1])
    c2, c3 = np.linalg.solve(m, b)
    return np.array([c0, c1, c2, c3, 0.0, 0.0])


@dataclass
class SwingTarget:
    """Phase-parameterized swing foot trajectory toward a planned landing."""

    landing: np.ndarray        # (3,), z = 0
    landing_yaw: float
    apex: float
    _fit_phase: float
    _coeff_x: np.ndarray
    _coeff_y: np.ndarray
    _coeff_z_up: np.ndarray
    _coeff_z_down: np.ndarray
    _yaw0: float

    def pose(self, phase: float) -> tuple[np.ndarray, float]:
        phase = float(np.clip(phase, 0.0, 1.0))
        s = phase - self._fit_phase
        x, _ = _poly_eval(self._coeff_x, s)
        y, _ = _poly_eval(self._coeff_y, s)
        if phase < 0.5:
            z, _ = _poly_eval(self._coeff_z_up, phase)
        else:
            z, _ = _poly_eval(self._coeff_z_down, phase - 0.5)
        span = max(1.0 - self._fit_phase, 1e-9)
        yaw = self._yaw0 + (self.landing_yaw - self._yaw0) * min(s / span, 1.0)
        return np.array([x, y, z]), yaw

    def velocity_xy(self, phase: float) -> np.ndarray:
        s = float(np.clip(phase, 0.0, 1.0)) - self._fit_phase
        _, vx = _poly_eval(self._coeff_x, s)
        _, vy = _poly_eval(self._coeff_y, s)
        return np.array([vx, vy])


def swing_target(
    plan: S2SPlan,
    yaws: np.ndarray,
    stance_xy: np.ndarray,
    swing_pose: tuple[np.ndarray, float],
    phase: float,
    apex: float = 0.08,
    prev: SwingTarget | None = None,
) -> SwingTarget:
    """Swing trajectory toward the plan's first future stance position.

    A fresh fit starts from the lift-off pose with zero boundary velocity and
    acceleration; when re-targeted mid-swing the fit continues from the
    previous trajectory's current position and velocity.
    """
    landing_xy = stance_xy[1]
    landing_yaw = float(yaws[1])
    landing = np.array([landing_xy[0], landing_xy[1], 0.0])
    pos, yaw_now = swing_pose
    pos = np.asarray(pos, dtype=float)
    phase = float(np.clip(phase, 0.0, 1.0))
    span = max(1.0 - phase, 1e-9)
    if prev is None or phase <= 0.0:
        v0 = np.zeros(2)
    else:
        v0 = prev.velocity_xy(phase)
    coeff_x = _quintic(pos[0], v0[0], 0.0, landing[0], 0.0, 0.0, span)
    coeff_y = _quintic(pos[1], v0[1], 0.0, landing[1], 0.0, 0.0, span)
    if prev is None or phase <= 0.0:
        z_up = _cubic(pos[2], 0.0, apex, 0.0, 0.5)
        z_down = _cubic(apex, 0.0, 0.0, 0.0, 0.5)
    else:
        z_up = prev._coeff_z_up
        z_down = prev._coeff_z_down
    return SwingTarget(
        landing=landing,
        landing_yaw=landing_yaw,
        apex=apex,
        _fit_phase=phase,
        _coeff_x=coeff_x,
        _coeff_y=coeff_y,
        _coeff_z_up=z_up,
        _coeff_z_down=z_down,
        _yaw0=float(yaw_now),
    )
