"""Mid-level linear MPC over the rigid-body models.

Multiple-shooting QP with states and inputs as variables (the sparse form
keeps upper-body state bounds expressible).  Per-node input constraints are
a friction pyramid, vertical force limits, center-of-pressure moment boxes,
a yaw-moment bound, and zero-wrench equalities on the swing foot; the
decomposed variant adds torso torque, arm force, arm position, and torso yaw
bounds.  Variables interleave as [u_0, x_1, u_1, x_2, ...] to keep the
normal matrix banded for the solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams
from .qp import QpProblem, QpSettings, QpSolution, QpSolver
from .refgen import SrbReferenceTrajectory
from .srb import (
    LEFT,
    DsrbInput,
    FootWrench,
    SrbState,
    dsrb_linearize,
    srb_linearize,
    rot_z,
)

SRB = "srb"
DSRB = "dsrb"


@dataclass
class MpcConfig:
    variant: str = SRB
    n_nodes: int = 10
    dt: float = 0.025
    q_position: float = 100.0
    q_orientation: float = 150.0
    q_velocity: float = 10.0
    q_angular: float = 10.0
    q_upper_pos: float = 50.0      # torso yaw and arm displacements
    q_upper_rate: float = 1.0
    # force regularization must stay far below the tracking weights at the
    # ~mg force scale or the optimizer trades height tracking for cheap force
    r_force: float = 1e-6
    r_moment: float = 1e-5
    r_upper: float = 1e-4
    mu: float = 0.6
    foot_half_length: float = 0.10
    foot_half_width: float = 0.03
    f_z_min: float = 10.0
    f_z_max: float = 600.0
    mu_z: float = 0.03             # yaw-moment coefficient [m]
    arm_force_bound: float = 40.0
    torso_torque_bound: float = 30.0
    arm_pos_bound: float = 0.25
    torso_yaw_bound: float = 0.6

    def __post_init__(self) -> None:
        if self.variant not in (SRB, DSRB):
            raise ValueError(f"unknown MPC variant {self.variant!r}")
        if self.mu <= 0.0:
            raise ValueError("friction coefficient must be positive")
        if self.f_z_min > self.f_z_max:
            raise ValueError("vertical force bounds out of order")

    @property
    def nx(self) -> int:
        return 19 if self.variant == DSRB else 13

    @property
    def nu(self) -> int:
        return 15 if self.variant == DSRB else 12

    def state_weights(self) -> np.ndarray:
        w = np.concatenate(
            [
                np.full(3, self.q_position),
                np.full(3, self.q_orientation),
                np.full(3, self.q_velocity),
                np.full(3, self.q_angular),
                [0.0],  # gravity entry is untracked
            ]
        )
        if self.variant == DSRB:
            w = np.concatenate(
                [w, np.full(3, self.q_upper_pos), np.full(3, self.q_upper_rate)]
            )
        return w

    def input_weights(self) -> np.ndarray:
        foot = np.concatenate([np.full(3, self.r_force), np.full(3, self.r_moment)])
        w = np.concatenate([foot, foot])
        if self.variant == DSRB:
            w = np.concatenate([w, np.full(3, self.r_upper)])
        return w


@dataclass
class MpcSolution:
    u0: DsrbInput
    predicted: np.ndarray      # (H+1, nx) including the current state
    status: str
    iterations: int
    wall_time: float
    qp_primal_res: float
    qp_dual_res: float


class StructuralError(ValueError):
    """Reference trajectory does not match the configured horizon."""


# per-interval inequality rows on the stance wrench (built in the foot frame)
_N_STANCE_ROWS = 11


def _stance_rows(config: MpcConfig, psi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows over one foot's wrench (6 cols): friction, F_z box, CoP, yaw."""
    rz = rot_z(psi).T  # world wrench -> foot frame
    rows = np.zeros((_N_STANCE_ROWS, 6))
    lower = np.full(_N_STANCE_ROWS, -np.inf)
    upper = np.zeros(_N_STANCE_ROWS)
    fx, fy, fz = rz[0], rz[1], rz[2]
    mx, my, mz = rz[0], rz[1], rz[2]
    mu = config.mu
    # friction pyramid
    rows[0, :3] = fx - mu * fz
    rows[1, :3] = -fx - mu * fz
    rows[2, :3] = fy - mu * fz
    rows[3, :3] = -fy - mu * fz
    # vertical force box
    rows[4, :3] = fz
    lower[4] = config.f_z_min
    upper[4] = config.f_z_max
    # center-of-pressure boxes
    rows[5, 3:] = my
    rows[5, :3] = -config.foot_half_length * fz
    rows[6, 3:] = -my
    rows[6, :3] = -config.foot_half_length * fz
    rows[7, 3:] = mx
    rows[7, :3] = -config.foot_half_width * fz
    rows[8, 3:] = -mx
    rows[8, :3] = -config.foot_half_width * fz
    # yaw moment
    rows[9, 3:] = mz
    rows[9, :3] = -config.mu_z * fz
    rows[10, 3:] = -mz
    rows[10, :3] = -config.mu_z * fz
    return rows, lower, upper


class MidLevelMpc:
    """One MPC instance per control loop; owns the solver workspace."""

    def __init__(self, config: MpcConfig, params: ModelParams):
        self.config = config
        self.params = params
        # one cached equilibration per variant: foot columns are symmetric, so
        # the scales carry across stance patterns; bandwidth is post-presolve
        self._scaling: tuple[np.ndarray, np.ndarray] | None = None
        self._bandwidth = (config.nu - 6) + 2 * config.nx - 1
        self._rho = None
        self._warm: tuple[np.ndarray, np.ndarray] | None = None
        self._settings = QpSettings(
            eps_abs=3e-4,
            eps_rel=1e-6,
            max_iter=2000,
            polish=False,
            check_interval=10,
        )
        h = config.n_nodes - 1
        self._nv = h * (config.nu + config.nx)
        self.last_qp: QpProblem | None = None
        self._solver: QpSolver | None = None
        self._last_key: tuple | None = None
        self._bounds_template: tuple[np.ndarray, np.ndarray] | None = None

    # -- variable layout -------------------------------------------------------

    def _u_slice(self, n: int) -> slice:
        c = self.config
        base = n * (c.nu + c.nx)
        return slice(base, base + c.nu)

    def _x_slice(self, n: int) -> slice:
        # state x_n for n in 1..H
        c = self.config
        base = (n - 1) * (c.nu + c.nx) + c.nu
        return slice(base, base + c.nx)

    # -- QP assembly -------------------------------------------------------------

    def build_qp(self, x0: np.ndarray, refs: SrbReferenceTrajectory) -> QpProblem:
        c = self.config
        params = self.params
        h = c.n_nodes - 1
        if refs.n_nodes < c.n_nodes:
            raise StructuralError(
                f"reference has {refs.n_nodes} nodes, config needs {c.n_nodes}"
            )
        nx, nu = c.nx, c.nu
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (nx,):
            raise StructuralError(f"state has shape {x0.shape}, expected {(nx,)}")

        n_upper = 6 if c.variant == DSRB else 0
        rows_per = nx + _N_STANCE_ROWS + 6 + n_upper
        m = h * rows_per
        nv = self._nv
        a = np.zeros((m, nv))
        lower = np.full(m, -np.inf)
        upper = np.full(m, np.inf)
        p_diag = np.zeros(nv)
        q = np.zeros(nv)

        wx = 2.0 * c.state_weights()
        wu = 2.0 * c.input_weights()
        dt = c.dt
        schedule = refs.schedule

        def full_ref(n: int) -> np.ndarray:
            ref = refs.x_ref[n]
            if c.variant == DSRB:
                ref = np.concatenate([ref, np.zeros(6)])
            return ref

        row = 0
        for n in range(h):
            lin_state = x0 if n == 0 else full_ref(n)
            lin_srb = SrbState.from_array(lin_state[:13])
            p_stf = refs.p_stf_ref[n]
            if c.variant == DSRB:
                a_n, b_n = dsrb_linearize(lin_srb, p_stf, params, dt)
            else:
                a_n, b_n = srb_linearize(lin_srb, p_stf, params, dt)

            # dynamics: x_{n+1} - A_n x_n - B_n u_n = (A_n x_0 if n == 0 else 0)
            rows = slice(row, row + nx)
            a[rows, self._x_slice(n + 1)] = np.eye(nx)
            a[rows, self._u_slice(n)] = -b_n
            if n == 0:
                rhs = a_n @ x0
            else:
                a[rows, self._x_slice(n)] = -a_n
                rhs = np.zeros(nx)
            lower[row : row + nx] = rhs
            upper[row : row + nx] = rhs
            row += nx

            # stance wrench constraints in the foot frame
            stance = schedule.contact[n]
            u_cols = self._u_slice(n).start
            stance_off = 0 if stance == LEFT else 6
            swing_off = 6 - stance_off
            s_rows, s_low, s_up = _stance_rows(c, refs.psi_stf_ref[n])
            a[row : row + _N_STANCE_ROWS, u_cols + stance_off : u_cols + stance_off + 6] = s_rows
            lower[row : row + _N_STANCE_ROWS] = s_low
            upper[row : row + _N_STANCE_ROWS] = s_up
            row += _N_STANCE_ROWS

            # swing foot produces no wrench
            for j in range(6):
                a[row + j, u_cols + swing_off + j] = 1.0
            lower[row : row + 6] = 0.0
            upper[row : row + 6] = 0.0
            row += 6

            if c.variant == DSRB:
                a[row, u_cols + 12] = 1.0
                lower[row] = -c.torso_torque_bound
                upper[row] = c.torso_torque_bound
                a[row + 1, u_cols + 13] = 1.0
                a[row + 2, u_cols + 14] = 1.0
                lower[row + 1 : row + 3] = -c.arm_force_bound
                upper[row + 1 : row + 3] = c.arm_force_bound
                x_cols = self._x_slice(n + 1).start
                a[row + 3, x_cols + 13] = 1.0
                lower[row + 3] = -c.torso_yaw_bound
                upper[row + 3] = c.torso_yaw_bound
                a[row + 4, x_cols + 14] = 1.0
                a[row + 5, x_cols + 15] = 1.0
                lower[row + 4 : row + 6] = -c.arm_pos_bound
                upper[row + 4 : row + 6] = c.arm_pos_bound
                row += 6

            p_diag[self._u_slice(n)] = wu
            p_diag[self._x_slice(n + 1)] = wx
            q[self._x_slice(n + 1)] = -wx * full_ref(n + 1)

        return QpProblem(np.diag(p_diag), q, a, lower, upper, validate=False)

    # -- solve ------------------------------------------------------------------

    def _linearize_first(self, x0: np.ndarray, refs: SrbReferenceTrajectory):
        lin = SrbState.from_array(x0[:13])
        if self.config.variant == DSRB:
            return dsrb_linearize(lin, refs.p_stf_ref[0], self.params, self.config.dt)
        return srb_linearize(lin, refs.p_stf_ref[0], self.params, self.config.dt)

    def _refresh_vectors(self, x0: np.ndarray, refs: SrbReferenceTrajectory) -> None:
        """Re-anchor the cached QP to fresh references and the current state.

        Between matrix rebuilds only vectors move: the tracking cost follows
        the regenerated references and the first dynamics row's right-hand
        side carries the current-state discretization A_0 x_0.  The matrix
        blocks (B_0 and the reference linearizations) refresh on rebuild.
        """
        c = self.config
        h = c.n_nodes - 1
        nx = c.nx
        problem = self.last_qp
        q = problem.q_vec.copy()
        lower, upper = self._bounds_template
        lower = lower.copy()
        upper = upper.copy()
        wx = 2.0 * c.state_weights()
        for n in range(1, h + 1):
            ref = refs.x_ref[n]
            if c.variant == DSRB:
                ref = np.concatenate([ref, np.zeros(6)])
            q[self._x_slice(n)] = -wx * ref
        a_0, _ = self._linearize_first(x0, refs)
        rhs = a_0 @ x0
        lower[:nx] = rhs
        upper[:nx] = rhs
        self._solver.update_vectors(q, lower, upper, assume_same_pattern=True)

    def solve(
        self,
        x0: np.ndarray,
        refs: SrbReferenceTrajectory,
        warm: bool = True,
        rebuild: bool = True,
    ) -> MpcSolution:
        t_start = time.perf_counter()
        c = self.config
        h = c.n_nodes - 1
        key = tuple(refs.schedule.contact[:h])
        if self._solver is None or key != self._last_key:
            rebuild = True
        if rebuild:
            problem = self.build_qp(x0, refs)
            self.last_qp = problem
            self._solver = QpSolver(
                problem,
                self._settings,
                scaling=self._scaling_bank.get(key),
                bandwidth=self._bandwidth,
                rho_init=self._rho,
            )
            if key not in self._scaling_bank:
                self._scaling_bank[key] = self._solver.scaling
            self._last_key = key
            self._bounds_template = (problem.lower.copy(), problem.upper.copy())
        else:
            x0 = np.asarray(x0, dtype=float)
            self._refresh_vectors(x0, refs)
        solver = self._solver
        sol = solver.solve(warm=self._warm if warm else None)
        self._rho = solver.rho_bar
        self._warm = (sol.z, sol.y)

        u0 = np.asarray(sol.z[self._u_slice(0)])
        h = c.n_nodes - 1
        predicted = np.zeros((h + 1, c.nx))
        predicted[0] = x0
        for n in range(1, h + 1):
            predicted[n] = sol.z[self._x_slice(n)]
        status = sol.status if sol.status != "max-iter" else "degraded"
        if c.variant == DSRB:
            u_full = u0
        else:
            u_full = np.concatenate([u0, np.zeros(3)])
        return MpcSolution(
            u0=DsrbInput.from_array(u_full),
            predicted=predicted,
            status=status,
            iterations=sol.iterations,
            wall_time=time.perf_counter() - t_start,
            qp_primal_res=sol.primal_res,
            qp_dual_res=sol.dual_res,
        )

    def reset_warm_start(self) -> None:
        self._warm = None


def build_mpc_qp(
    x0: np.ndarray,
    refs: SrbReferenceTrajectory,
    config: MpcConfig,
    params: ModelParams,
) -> QpProblem:
    return MidLevelMpc(config, params).build_qp(x0, refs)


def solve_mpc(
    x0: np.ndarray,
    refs: SrbReferenceTrajectory,
    config: MpcConfig,
    params: ModelParams,
    warm: MidLevelMpc | None = None,
) -> MpcSolution:
    """One-shot solve; pass a persistent MidLevelMpc to keep warm starts."""
    mpc = warm if warm is not None else MidLevelMpc(config, params)
    return mpc.solve(x0, refs)


def wrench_to_plant_input(sol: MpcSolution, variant: str) -> DsrbInput:
    """Embed the MPC wrench solution as a plant input.

    The plant consumes the decomposed input directly; the SRB variant has no
    upper-body channels so they stay zero.
    """
    u = sol.u0
    if variant == SRB:
        return DsrbInput(
            left=FootWrench(u.left.force.copy(), u.left.moment.copy()),
            right=FootWrench(u.right.force.copy(), u.right.moment.copy()),
            tau_tr=0.0,
            f_la_x=0.0,
            f_ra_x=0.0,
        )
    return u
