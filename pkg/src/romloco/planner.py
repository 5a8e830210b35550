"""Step planner: nonlinear MPC over the step-to-step pendulum dynamics.

Jointly optimizes pre-impact states, step lengths, step periods, and ankle
torques over a K-step horizon.  The cost is quadratic in every variable and
the constraints are linear except through the step periods, so the problem
is solved by Gauss-Newton SQP: exact flow-map sensitivities build the
constraint Jacobians, each subproblem is a small dense QP, and an l1 merit
line search globalizes the steps.

Index conventions (one flow interval per step k, stance side alternating):
state x_k is the pre-impact state ending interval k-1; the landing at x_k
starts interval k with step length l_k.  The first decision landing is l_1;
l_0 describes the already-placed current stance and only carries cost.  The
first interval's remaining time is T_0 - t_curr.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .alip import (
    AlipState,
    B_D,
    alip_system_matrices,
    alip_transition,
    desired_step_lengths,
    hlip_period1,
    hlip_period2,
    hlip_to_alip,
    transition_batch,
)
from .params import ModelParams
from .qp import QpProblem, QpSettings, QpSolver
from .srb import LEFT, RIGHT, gamma_for_side, other_side


class InfeasibleWindowError(RuntimeError):
    """No feasible first-step period remains at this point in the step."""


@dataclass
class PlannerConfig:
    k_steps: int = 4
    q_x: tuple[float, float, float, float] = (10.0, 1.0, 10.0, 1.0)
    r_l: tuple[float, float] = (1.0, 1.0)
    r_t: float = 5.0
    r_tau: tuple[float, float] = (0.01, 0.01)
    x_lb: tuple[float, float, float, float] = (-0.8, -80.0, -0.8, -80.0)
    x_ub: tuple[float, float, float, float] = (0.8, 80.0, 0.8, 80.0)
    l_x_bound: float = 0.6
    l_y_inner: float = 0.10   # lateral bounds depend on the stepping direction:
    l_y_outer: float = 0.45   # gamma * l_y in [inner, outer] prevents leg crossing
    t_lb: float = 0.25
    t_ub: float = 0.5
    tau_bound: float = 20.0
    t_des: float = 0.4
    l_y_offset: float = 0.2
    sqp_max_iter: int = 15
    sqp_tol: float = 1e-6
    merit_penalty: float = 1e3
    min_remaining: float = 0.05  # floor on T_0 - t_curr [s]

    def step_length_bounds(self, gamma: int) -> tuple[np.ndarray, np.ndarray]:
        if gamma > 0:
            lat = (self.l_y_inner, self.l_y_outer)
        else:
            lat = (-self.l_y_outer, -self.l_y_inner)
        return (
            np.array([-self.l_x_bound, lat[0]]),
            np.array([self.l_x_bound, lat[1]]),
        )


@dataclass
class PlannerQuery:
    x0: AlipState
    t_curr: float
    stance_side: str
    v_cmd: tuple[float, float] = (0.0, 0.0)
    omega_cmd: float = 0.0

    def validate(self, config: PlannerConfig) -> None:
        self.x0.validate()
        if not 0.0 <= self.t_curr < config.t_ub + config.min_remaining:
            raise ValueError(f"t_curr {self.t_curr} outside the current step window")
        if self.stance_side not in (LEFT, RIGHT):
            raise ValueError(f"unknown stance side {self.stance_side!r}")


@dataclass
class SolverStats:
    iterations: int = 0
    kkt_step_norm: float = np.inf
    dynamics_residual: float = np.inf
    cost: float = np.inf
    qp_iterations: int = 0
    wall_time: float = 0.0
    converged: bool = False
    merit_history: list = field(default_factory=list)  # (before, after) per accepted step


@dataclass
class S2SPlan:
    x_pre: np.ndarray              # (K, 4) pre-impact states
    l: np.ndarray                  # (K, 2) step lengths; l[0] is the placed stance
    t: np.ndarray                  # (K,) step periods [s]
    tau: np.ndarray                # (K, 2) ankle torques
    stance_sides: list[str]        # stance during each flow interval
    solver_stats: SolverStats = field(default_factory=SolverStats)

    @property
    def k_steps(self) -> int:
        return self.t.shape[0]

    def copy(self) -> "S2SPlan":
        return S2SPlan(
            x_pre=self.x_pre.copy(),
            l=self.l.copy(),
            t=self.t.copy(),
            tau=self.tau.copy(),
            stance_sides=list(self.stance_sides),
            solver_stats=self.solver_stats,
        )


@dataclass
class StepReferences:
    x_des: np.ndarray       # (K, 4) desired pre-impact states for x_1..x_K
    l_des: np.ndarray       # (K, 2) desired landings for l_0..l_{K-1}
    t_des: np.ndarray       # (K,)
    gammas: np.ndarray      # (K,) stepping direction of each landing l_k
    v_hlip: np.ndarray      # (K, 2) per-step HLIP desired velocity (stance frame)


def build_step_references(
    query: PlannerQuery, config: PlannerConfig, params: ModelParams
) -> StepReferences:
    """Per-step desired pre-impact states, landings, and periods.

    Sagittal targets come from the period-1 orbit, lateral targets from the
    period-2 orbit at the desired period, branch alternating with the stance
    side.  The landing at x_k is taken from stance side s_{k-1}, so its
    direction gamma matches that side.
    """
    k_steps = config.k_steps
    vx, vy = query.v_cmd
    sag = hlip_period1(config.t_des, params.p_z_des, vx, params.g)
    x_des = np.zeros((k_steps, 4))
    l_des = np.zeros((k_steps, 2))
    t_des = np.full(k_steps, config.t_des)
    gammas = np.zeros(k_steps, dtype=int)
    v_hlip = np.zeros((k_steps, 2))
    side = query.stance_side
    for k in range(k_steps):
        # landing l_k is made from stance s_{k-1} = flip(s_k)
        gamma_k = -gamma_for_side(side)
        gammas[k] = gamma_k
        l_des[k] = desired_step_lengths(
            query.v_cmd, config.t_des, gamma_k, config.l_y_offset
        ).as_array()
        # state x_{k+1} is the pre-impact about to step with gamma(s_k)
        gamma_state = gamma_for_side(side)
        front = hlip_period2(
            config.t_des, params.p_z_des, vy, config.l_y_offset, gamma_state, params.g
        )
        x_des[k] = hlip_to_alip(sag, front, params).as_array()
        # node velocity reference: the commanded velocity the orbits realize on
        # average (branch pre-impact values bias the stance-leg momentum and
        # drag the closed-loop cadence off the desired period)
        v_hlip[k] = (vx, vy)
        side = other_side(side)
    return StepReferences(x_des=x_des, l_des=l_des, t_des=t_des, gammas=gammas, v_hlip=v_hlip)


def nominal_orbit_state(
    t_curr: float,
    stance_side: str,
    v_cmd: tuple[float, float],
    config: PlannerConfig,
    params: ModelParams,
) -> AlipState:
    """State on the nominal composite orbit, t_curr into a step.

    Flows the post-impact state of the previous nominal landing forward, so
    a planner queried here should reproduce the orbit at zero cost.
    """
    prev_gamma = -gamma_for_side(stance_side)
    sag = hlip_period1(config.t_des, params.p_z_des, v_cmd[0], params.g)
    front = hlip_period2(
        config.t_des, params.p_z_des, v_cmd[1], config.l_y_offset, prev_gamma, params.g
    )
    x_pre_prev = hlip_to_alip(sag, front, params).as_array()
    l_prev = desired_step_lengths(
        v_cmd, config.t_des, prev_gamma, config.l_y_offset
    ).as_array()
    tr = alip_transition(params, t_curr)
    x0 = tr.phi @ (x_pre_prev + B_D @ l_prev)
    return AlipState.from_array(x0)


def warm_start_shift(prev: S2SPlan, elapsed: float, stepped: bool) -> S2SPlan:
    """Initial guess from the previous plan.

    After an impact the plan rotates one step forward and the last step is
    repeated; otherwise the previous plan passes through (the shrunken first
    period enters through t_curr in the query).
    """
    guess = prev.copy()
    if stepped:
        guess.x_pre[:-1] = prev.x_pre[1:]
        guess.l[:-1] = prev.l[1:]
        guess.t[:-1] = prev.t[1:]
        guess.tau[:-1] = prev.tau[1:]
        guess.x_pre[-1] = prev.x_pre[-1]
        guess.l[-1] = prev.l[-1]
        guess.t[-1] = prev.t[-1]
        guess.tau[-1] = prev.tau[-1]
        guess.stance_sides = [other_side(s) for s in guess.stance_sides]
    return guess


class _Layout:
    """Flat packing of (x_1..x_K, l_0..l_{K-1}, T_0..T_{K-1}, tau_0..tau_{K-1})."""

    def __init__(self, k_steps: int):
        self.k = k_steps
        self.n = 9 * k_steps
        self.m_eq = 4 * k_steps

    def x(self, k: int) -> slice:
        # state x_k for k in 1..K
        return slice(4 * (k - 1), 4 * k)

    def l(self, k: int) -> slice:
        return slice(4 * self.k + 2 * k, 4 * self.k + 2 * k + 2)

    def t(self, k: int) -> int:
        return 6 * self.k + k

    def tau(self, k: int) -> slice:
        return slice(7 * self.k + 2 * k, 7 * self.k + 2 * k + 2)


def _transitions_for(params: ModelParams, durations: np.ndarray, with_derivative: bool):
    """Flow maps for all intervals at once (closed form, exact).

    dPhi/dT = A Phi and dGamma/dT = Phi B follow from the exponential, so the
    sensitivities are exact; the cosh/sinh closed form equals the matrix
    exponential for this block structure.
    """
    phis, gammas = transition_batch(params, durations)
    if not with_derivative:
        return phis, gammas, None, None
    a, b = alip_system_matrices(params)
    dphis = np.einsum("ij,njk->nik", a, phis)
    dgammas = np.einsum("nij,jk->nik", phis, b)
    return phis, gammas, dphis, dgammas


class StepPlanner:
    """Mutable planner workspace (one per control loop)."""

    def __init__(self, config: PlannerConfig, params: ModelParams):
        self.config = config
        self.params = params
        self._layout = _Layout(config.k_steps)
        # loose ADMM phase + exact active-set polish keeps subproblems cheap
        self._qp_settings = QpSettings(
            eps_abs=1e-6, eps_rel=1e-6, loose_factor=1000.0, max_iter=4000
        )
        self._build_cost_weights()

    def _build_cost_weights(self) -> None:
        c = self.config
        lay = self._layout
        w = np.zeros(lay.n)
        for k in range(1, c.k_steps + 1):
            w[lay.x(k)] = c.q_x
        for k in range(c.k_steps):
            w[lay.l(k)] = c.r_l
            w[lay.t(k)] = c.r_t
            w[lay.tau(k)] = c.r_tau
        self._weights = w

    # -- bounds and targets ----------------------------------------------------

    def _bounds(self, query: PlannerQuery, refs: StepReferences):
        c = self.config
        lay = self._layout
        lb = np.full(lay.n, -np.inf)
        ub = np.full(lay.n, np.inf)
        for k in range(1, c.k_steps + 1):
            lb[lay.x(k)] = c.x_lb
            ub[lay.x(k)] = c.x_ub
        for k in range(c.k_steps):
            l_lo, l_hi = c.step_length_bounds(int(refs.gammas[k]))
            lb[lay.l(k)] = l_lo
            ub[lay.l(k)] = l_hi
            lb[lay.t(k)] = c.t_lb
            ub[lay.t(k)] = c.t_ub
            lb[lay.tau(k)] = -c.tau_bound
            ub[lay.tau(k)] = c.tau_bound
        t0_floor = query.t_curr + c.min_remaining
        if t0_floor > c.t_ub:
            raise InfeasibleWindowError(
                f"t_curr {query.t_curr:.3f} leaves no feasible first period below {c.t_ub}"
            )
        lb[lay.t(0)] = max(c.t_lb, t0_floor)
        return lb, ub

    def _targets(self, refs: StepReferences) -> np.ndarray:
        c = self.config
        lay = self._layout
        zd = np.zeros(lay.n)
        for k in range(1, c.k_steps + 1):
            zd[lay.x(k)] = refs.x_des[k - 1]
        for k in range(c.k_steps):
            zd[lay.l(k)] = refs.l_des[k]
            zd[lay.t(k)] = refs.t_des[k]
        return zd

    # -- nonlinear pieces --------------------------------------------------------

    def _durations(self, z: np.ndarray, query: PlannerQuery) -> np.ndarray:
        lay = self._layout
        out = np.array([z[lay.t(k)] for k in range(self.config.k_steps)])
        out[0] -= query.t_curr
        return out

    def _propagate_states(self, z: np.ndarray, query: PlannerQuery) -> None:
        """Overwrite the state variables with the rollout of (l, T, tau)."""
        lay = self._layout
        phis, gammas, _, _ = _transitions_for(
            self.params, self._durations(z, query), with_derivative=False
        )
        z[lay.x(1)] = phis[0] @ query.x0.as_array() + gammas[0] @ z[lay.tau(0)]
        for k in range(1, self.config.k_steps):
            z[lay.x(k + 1)] = (
                phis[k] @ (z[lay.x(k)] + B_D @ z[lay.l(k)]) + gammas[k] @ z[lay.tau(k)]
            )

    def _constraints(self, z: np.ndarray, query: PlannerQuery, with_jacobian: bool):
        lay = self._layout
        c_vec = np.zeros(lay.m_eq)
        jac = np.zeros((lay.m_eq, lay.n)) if with_jacobian else None
        x0 = query.x0.as_array()
        phis, gammas, dphis, dgammas = _transitions_for(
            self.params, self._durations(z, query), with_derivative=with_jacobian
        )

        tau0 = z[lay.tau(0)]
        c_vec[0:4] = z[lay.x(1)] - phis[0] @ x0 - gammas[0] @ tau0
        if with_jacobian:
            jac[0:4, lay.x(1)] = np.eye(4)
            jac[0:4, lay.t(0)] = -(dphis[0] @ x0 + dgammas[0] @ tau0)
            jac[0:4, lay.tau(0)] = -gammas[0]

        for k in range(1, self.config.k_steps):
            rows = slice(4 * k, 4 * k + 4)
            x_post = z[lay.x(k)] + B_D @ z[lay.l(k)]
            tau_k = z[lay.tau(k)]
            c_vec[rows] = z[lay.x(k + 1)] - phis[k] @ x_post - gammas[k] @ tau_k
            if with_jacobian:
                jac[rows, lay.x(k + 1)] = np.eye(4)
                jac[rows, lay.x(k)] = -phis[k]
                jac[rows, lay.l(k)] = -phis[k] @ B_D
                jac[rows, lay.t(k)] = -(dphis[k] @ x_post + dgammas[k] @ tau_k)
                jac[rows, lay.tau(k)] = -gammas[k]
        return c_vec, jac

    def _cost(self, z: np.ndarray, zd: np.ndarray) -> float:
        dz = z - zd
        return float(np.sum(self._weights * dz * dz))

    # -- main solve ---------------------------------------------------------------

    def solve(self, query: PlannerQuery, warm: S2SPlan | None = None) -> S2SPlan:
        t_start = time.perf_counter()
        cfg = self.config
        lay = self._layout
        query.validate(cfg)
        refs = build_step_references(query, cfg, self.params)
        lb, ub = self._bounds(query, refs)
        zd = self._targets(refs)

        z = np.zeros(lay.n)
        if warm is not None and warm.k_steps == cfg.k_steps:
            for k in range(1, cfg.k_steps + 1):
                z[lay.x(k)] = warm.x_pre[k - 1]
            for k in range(cfg.k_steps):
                z[lay.l(k)] = warm.l[k]
                z[lay.t(k)] = warm.t[k]
                z[lay.tau(k)] = warm.tau[k]
            z = np.clip(z, lb, ub)
        else:
            for k in range(cfg.k_steps):
                z[lay.l(k)] = refs.l_des[k]
                z[lay.t(k)] = refs.t_des[k]
            z[lay.t(0)] = max(z[lay.t(0)], lb[lay.t(0)])
            self._propagate_states(z, query)
            z = np.clip(z, lb, ub)

        h_diag = 2.0 * self._weights
        stats = SolverStats()
        mu = cfg.merit_penalty
        qp_warm = None
        eye_n = np.eye(lay.n)

        for it in range(cfg.sqp_max_iter):
            stats.iterations = it + 1
            c_vec, jac = self._constraints(z, query, with_jacobian=True)
            grad = h_diag * (z - zd)
            a_mat = np.vstack([jac, eye_n])
            lower = np.concatenate([-c_vec, lb - z])
            upper = np.concatenate([-c_vec, ub - z])
            problem = QpProblem(np.diag(h_diag), grad, a_mat, lower, upper)
            sol = QpSolver(problem, self._qp_settings).solve(warm=qp_warm)
            stats.qp_iterations += sol.iterations
            d = sol.z
            qp_warm = (d, sol.y)

            mu = max(mu, 2.0 * np.abs(sol.y[: lay.m_eq]).max(initial=0.0))
            c_norm = np.abs(c_vec).max(initial=0.0)
            step_norm = np.abs(d).max(initial=0.0)
            if step_norm < cfg.sqp_tol and c_norm < cfg.sqp_tol:
                stats.converged = True
                stats.kkt_step_norm = step_norm
                break

            merit0 = self._cost(z, zd) + mu * np.abs(c_vec).sum()
            descent = grad @ d - mu * np.abs(c_vec).sum()
            alpha = 1.0
            for _ in range(30):
                z_try = np.clip(z + alpha * d, lb, ub)
                c_try, _ = self._constraints(z_try, query, with_jacobian=False)
                merit_try = self._cost(z_try, zd) + mu * np.abs(c_try).sum()
                if merit_try <= merit0 + 1e-4 * alpha * min(descent, 0.0) or alpha < 1e-6:
                    break
                alpha *= 0.5
            z = np.clip(z + alpha * d, lb, ub)
            stats.kkt_step_norm = step_norm
            stats.merit_history.append((merit0, merit_try))

        c_final, _ = self._constraints(z, query, with_jacobian=False)
        stats.dynamics_residual = float(np.abs(c_final).max(initial=0.0))
        if not stats.converged:
            # best feasible-projected iterate: trust the inputs, re-roll states
            z = np.clip(z, lb, ub)
            self._propagate_states(z, query)
            c_final, _ = self._constraints(z, query, with_jacobian=False)
            stats.dynamics_residual = float(np.abs(c_final).max(initial=0.0))
        stats.cost = self._cost(z, zd)
        stats.wall_time = time.perf_counter() - t_start

        sides = [query.stance_side]
        for _ in range(cfg.k_steps - 1):
            sides.append(other_side(sides[-1]))
        return S2SPlan(
            x_pre=np.stack([z[lay.x(k)] for k in range(1, cfg.k_steps + 1)]),
            l=np.stack([z[lay.l(k)] for k in range(cfg.k_steps)]),
            t=np.array([z[lay.t(k)] for k in range(cfg.k_steps)]),
            tau=np.stack([z[lay.tau(k)] for k in range(cfg.k_steps)]),
            stance_sides=sides,
            solver_stats=stats,
        )


def solve_nmpc(
    query: PlannerQuery,
    config: PlannerConfig,
    params: ModelParams,
    warm: S2SPlan | None = None,
) -> S2SPlan:
    """One-shot planner solve; keep a StepPlanner for the re-solve loop."""
    return StepPlanner(config, params).solve(query, warm=warm)
