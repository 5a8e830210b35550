"""Nonlinear plant simulation with hybrid stance switching and co-simulation.

The plant is the nonlinear decomposed rigid-body model: exact Euler-angle
kinematics, rotated inertia, foot wrenches at the foot points, and the
upper-body coordinates integrated as second-order states.  Impacts are
time-triggered by the active plan; the swing foot follows its polynomial and
lands exactly on its target.  The episode loop runs plant, mid-level MPC,
and step planner at their own cadences, deterministically.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as k
from .alip import AlipState, alip_state_from_robot
from .mpc import DSRB, SRB, MidLevelMpc, MpcConfig, wrench_to_plant_input
from .params import ModelParams
from .planner import (
    InfeasibleWindowError,
    PlannerConfig,
    PlannerQuery,
    S2SPlan,
    StepPlanner,
    build_step_references,
    nominal_orbit_state,
    warm_start_shift,
)
from .refgen import (
    assemble_srb_refs,
    schedule_nodes,
    stance_positions,
    swing_target,
    yaw_schedule,
)
from .srb import (
    LEFT,
    RIGHT,
    DsrbInput,
    DsrbState,
    SrbState,
    StanceInfo,
    EulerSingularityError,
    gamma_for_side,
    other_side,
    rot_z,
)

PITCH_LIMIT = np.pi / 2.0 - 0.01


@dataclass
class PlantState:
    dsrb: DsrbState
    stance: StanceInfo
    swing_pos: np.ndarray      # swing foot position, inertial [m]
    swing_yaw: float
    t: float = 0.0             # simulation clock [s]
    t_step: float = 0.0        # time since the last impact [s]


@dataclass
class Disturbance:
    kind: str                  # "com-force" | "torso-moment"
    vector: np.ndarray         # [N] or [N m]
    t_start: float
    duration: float

    def __post_init__(self) -> None:
        if self.kind not in ("com-force", "torso-moment"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.duration <= 0.0:
            raise ValueError("disturbance duration must be positive")
        self.vector = np.asarray(self.vector, dtype=float)

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_start + self.duration


@dataclass
class SimConfig:
    dt_sim: float = 0.001
    mpc_period: float = 0.002
    planner_period: float = 0.025
    episode_length: float = 10.0
    roll_pitch_limit: float = 0.5          # [rad] success threshold
    height_band: tuple[float, float] = (0.4, 1.5)  # fractions of p_z_des
    leg_reach: float = 0.75                # [m] landing reach limit
    estimate_noise_std: float = 0.0
    swing_apex: float = 0.08

    def __post_init__(self) -> None:
        for period in (self.mpc_period, self.planner_period):
            ratio = period / self.dt_sim
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("dt_sim must divide the controller periods")


@dataclass
class StepRecord:
    t_impact: float
    period: float              # realized step period [s]
    length: np.ndarray         # realized landing displacement, stance frame [m]
    side: str                  # side that just finished stance


@dataclass
class EpisodeLog:
    time: np.ndarray           # (n,)
    x: np.ndarray              # (n, 19) plant states
    u: np.ndarray              # (n, 15) applied inputs
    stance_side: np.ndarray    # (n,) 0 = left, 1 = right
    p_stf: np.ndarray          # (n, 3)
    psi_stf: np.ndarray        # (n,)
    t_step: np.ndarray         # (n,)
    plan_id: np.ndarray        # (n,)
    swing_pos: np.ndarray      # (n, 3)
    steps: list[StepRecord] = field(default_factory=list)
    disturbances: list[Disturbance] = field(default_factory=list)
    failures: list[tuple[float, str]] = field(default_factory=list)
    success: bool = False
    metrics: dict = field(default_factory=dict)

    @property
    def n_ticks(self) -> int:
        return self.time.shape[0]

    def to_csv(self, path) -> None:
        """One row per plant tick with the documented column set."""
        header = (
            ["t"]
            + [f"x{i:02d}" for i in range(19)]
            + [f"u{i:02d}" for i in range(15)]
            + ["stance_side", "p_stf_x", "p_stf_y", "p_stf_z", "psi_stf", "t_step", "plan_id"]
            + ["swing_x", "swing_y", "swing_z"]
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.n_ticks):
                row = (
                    [f"{self.time[i]:.6f}"]
                    + [f"{v:.9g}" for v in self.x[i]]
                    + [f"{v:.9g}" for v in self.u[i]]
                    + [
                        int(self.stance_side[i]),
                        f"{self.p_stf[i, 0]:.9g}",
                        f"{self.p_stf[i, 1]:.9g}",
                        f"{self.p_stf[i, 2]:.9g}",
                        f"{self.psi_stf[i]:.9g}",
                        f"{self.t_step[i]:.6f}",
                        int(self.plan_id[i]),
                    ]
                    + [f"{v:.9g}" for v in self.swing_pos[i]]
                )
                writer.writerow(row)

    def summary(self) -> dict:
        return {
            "success": bool(self.success),
            "duration": float(self.time[-1]) if self.n_ticks else 0.0,
            "n_steps": len(self.steps),
            "failures": [{"t": t, "reason": r} for t, r in self.failures],
            **{key: value for key, value in self.metrics.items()},
        }

    def to_json_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def step_plant(
    state: PlantState,
    u: DsrbInput,
    disturbances: list[Disturbance],
    dt: float,
    params: ModelParams,
    locked: bool = False,
) -> PlantState:
    """Advance the plant one RK4 step under held inputs and disturbances."""
    d_force = np.zeros(3)
    d_moment = np.zeros(3)
    for dist in disturbances:
        if dist.active(state.t):
            if dist.kind == "com-force":
                d_force = d_force + dist.vector
            else:
                d_moment = d_moment + dist.vector
    if state.stance.side == LEFT:
        p_left, p_right = state.stance.p_stf, state.swing_pos
    else:
        p_left, p_right = state.swing_pos, state.stance.p_stf
    ib = _plant_inertia(params, locked)
    x_new = k.plant_rk4(
        state.dsrb.as_array(),
        u.as_array(),
        np.asarray(p_left, dtype=float),
        np.asarray(p_right, dtype=float),
        d_force,
        d_moment,
        dt,
        params.m_com,
        ib,
        params.m_la,
        params.m_ra,
        np.asarray(params.r_la, dtype=float),
        np.asarray(params.r_ra, dtype=float),
        params.i_tr_z,
        params.g,
        locked,
    )
    if abs(x_new[4]) >= PITCH_LIMIT:
        raise EulerSingularityError(f"pitch {x_new[4]:.3f} rad during integration")
    return PlantState(
        dsrb=DsrbState.from_array(x_new),
        stance=state.stance,
        swing_pos=state.swing_pos,
        swing_yaw=state.swing_yaw,
        t=state.t + dt,
        t_step=state.t_step + dt,
    )


def _plant_inertia(params: ModelParams, locked: bool) -> np.ndarray:
    if locked:
        return np.asarray(params.i_com, dtype=float)
    return np.array([params.i_com[0], params.i_com[1], params.i_lb_z])


def apply_impact(
    state: PlantState,
    landing_pos: np.ndarray,
    landing_yaw: float,
    params: ModelParams,
    leg_reach: float = 0.75,
) -> tuple[PlantState, str | None]:
    """Swap stance onto the landed swing foot; the body state is continuous.

    Returns the new plant state and an optional failure reason when the
    landing lies beyond kinematic reach.
    """
    landing = np.asarray(landing_pos, dtype=float).copy()
    landing[2] = 0.0
    failure = None
    if np.linalg.norm(landing - state.dsrb.srb.p_com) > leg_reach:
        failure = "landing beyond kinematic reach"
    new_stance = StanceInfo(
        side=other_side(state.stance.side),
        p_stf=landing,
        psi_stf=float(landing_yaw),
    )
    return (
        PlantState(
            dsrb=state.dsrb,
            stance=new_stance,
            swing_pos=state.stance.p_stf.copy(),
            swing_yaw=state.stance.psi_stf,
            t=state.t,
            t_step=0.0,
        ),
        failure,
    )


@dataclass
class CommandProfile:
    """Piecewise-constant velocity and turn-rate command."""

    setpoints: list[tuple[float, float, float, float]] = field(
        default_factory=lambda: [(0.0, 0.0, 0.0, 0.0)]
    )  # (t, v_x, v_y, omega_z)

    def at(self, t: float) -> tuple[float, float, float]:
        vx, vy, om = 0.0, 0.0, 0.0
        for t_i, vx_i, vy_i, om_i in self.setpoints:
            if t >= t_i - 1e-12:
                vx, vy, om = vx_i, vy_i, om_i
        return vx, vy, om


def initial_plant_state(
    params: ModelParams,
    planner_config: PlannerConfig,
    v_cmd: tuple[float, float],
    stance_side: str = RIGHT,
) -> PlantState:
    """Plant state on the nominal orbit at the start of a step."""
    x_alip = nominal_orbit_state(0.0, stance_side, v_cmd, planner_config, params)
    mpz = params.m_com * params.p_z_des
    p_com = np.array([x_alip.p_x, x_alip.p_y, params.p_z_des])
    v_com = np.array([x_alip.l_y / mpz, -x_alip.l_x / mpz, 0.0])
    srb = SrbState(
        p_com=p_com,
        theta_com=np.zeros(3),
        v_com=v_com,
        omega_com=np.zeros(3),
        g_entry=params.g,
    )
    stance = StanceInfo(side=stance_side, p_stf=np.zeros(3), psi_stf=0.0)
    # previous stance foot sits one nominal landing behind the current one
    from .alip import desired_step_lengths

    prev_gamma = -gamma_for_side(stance_side)
    l_prev = desired_step_lengths(
        v_cmd, planner_config.t_des, prev_gamma, planner_config.l_y_offset
    ).as_array()
    swing = np.array([-l_prev[0], -l_prev[1], 0.0])
    return PlantState(
        dsrb=DsrbState(srb=srb),
        stance=stance,
        swing_pos=swing,
        swing_yaw=0.0,
        t=0.0,
        t_step=0.0,
    )


class EpisodeRunner:
    """Deterministic co-simulation of plant, MPC, and step planner."""

    def __init__(
        self,
        params: ModelParams,
        planner_config: PlannerConfig,
        mpc_config: MpcConfig,
        sim_config: SimConfig,
        command: CommandProfile | None = None,
        disturbances: list[Disturbance] | None = None,
        seed: int = 0,
        record: bool = True,
    ):
        self.params = params
        self.planner_config = planner_config
        self.mpc_config = mpc_config
        self.sim_config = sim_config
        self.command = command or CommandProfile()
        self.disturbances = disturbances or []
        self.seed = seed
        self.record = record
        self.rng = np.random.default_rng(seed)
        self.locked = mpc_config.variant == SRB
        self.bench_planner: list[float] = []
        self.bench_mpc: list[float] = []

    # -- measurement ----------------------------------------------------------

    def _measure_alip(self, state: PlantState) -> AlipState:
        srb = state.dsrb.srb
        rz_t = rot_z(state.stance.psi_stf).T
        p_rel = rz_t @ (srb.p_com - state.stance.p_stf)
        v = rz_t @ srb.v_com
        omega = rz_t @ srb.omega_com
        if self.sim_config.estimate_noise_std > 0.0:
            noise = self.rng.normal(size=9) * self.sim_config.estimate_noise_std
            p_rel = p_rel + noise[0:3]
            v = v + noise[3:6]
            omega = omega + noise[6:9]
        return alip_state_from_robot(p_rel, v, omega, self.params)

    def _measure_mpc_state(self, state: PlantState) -> np.ndarray:
        srb = state.dsrb.srb
        x = state.dsrb.as_array()
        x[0:2] = srb.p_com[0:2] - state.stance.p_stf[0:2]
        if self.locked:
            return x[:13]
        return x

    # -- main loop --------------------------------------------------------------

    def run(self) -> EpisodeLog:
        params = self.params
        pcfg = self.planner_config
        scfg = self.sim_config
        dt = scfg.dt_sim
        n_ticks = int(round(scfg.episode_length / dt))
        mpc_every = int(round(scfg.mpc_period / dt))
        planner_every = int(round(scfg.planner_period / dt))

        vx, vy, om = self.command.at(0.0)
        state = initial_plant_state(params, pcfg, (vx, vy))
        planner = StepPlanner(pcfg, params)
        mpc = MidLevelMpc(self.mpc_config, params)

        query = PlannerQuery(
            x0=self._measure_alip(state),
            t_curr=0.0,
            stance_side=state.stance.side,
            v_cmd=(vx, vy),
            omega_cmd=om,
        )
        plan = planner.solve(query)
        plan_id = 0
        refs_steps = build_step_references(query, pcfg, params)
        swing = None
        u = DsrbInput()
        force_rebuild = True

        nlog = n_ticks + 1 if self.record else 0
        log = EpisodeLog(
            time=np.zeros(nlog),
            x=np.zeros((nlog, 19)),
            u=np.zeros((nlog, 15)),
            stance_side=np.zeros(nlog, dtype=np.int8),
            p_stf=np.zeros((nlog, 3)),
            psi_stf=np.zeros(nlog),
            t_step=np.zeros(nlog),
            plan_id=np.zeros(nlog, dtype=np.int32),
            swing_pos=np.zeros((nlog, 3)),
            disturbances=list(self.disturbances),
        )
        com_trace = np.zeros((n_ticks + 1, 3))
        rp_max = 0.0
        z_min, z_max = np.inf, -np.inf
        failed = False

        for tick in range(n_ticks):
            t = tick * dt
            vx, vy, om = self.command.at(t)

            # planner cadence: replan unless inside the commitment window
            if tick % planner_every == 0 and tick > 0:
                remaining = plan.t[0] - state.t_step
                if remaining > pcfg.min_remaining + 1e-9:
                    query = PlannerQuery(
                        x0=self._measure_alip(state),
                        t_curr=state.t_step,
                        stance_side=state.stance.side,
                        v_cmd=(vx, vy),
                        omega_cmd=om,
                    )
                    try:
                        t_solve = time.perf_counter()
                        plan = planner.solve(query, warm=warm_start_shift(plan, 0.0, False))
                        self.bench_planner.append(time.perf_counter() - t_solve)
                        plan_id += 1
                        refs_steps = build_step_references(query, pcfg, params)
                    except InfeasibleWindowError:
                        pass  # keep the committed plan through the impact

            # mid-level cadence: regenerate references and re-solve
            if tick % mpc_every == 0:
                yaws = yaw_schedule(om, plan, state.stance.psi_stf)
                stance_xy = stance_positions(plan, yaws)
                sched = schedule_nodes(
                    plan, self.mpc_config.dt, self.mpc_config.n_nodes, state.t_step
                )
                refs = assemble_srb_refs(
                    plan, yaws, stance_xy, sched, refs_steps.v_hlip, om, params
                )
                phase = min(state.t_step / max(plan.t[0], 1e-6), 1.0)
                swing = swing_target(
                    plan,
                    yaws,
                    stance_xy,
                    (state.swing_pos - np.array([*state.stance.p_stf[:2], 0.0]), state.swing_yaw),
                    phase,
                    apex=scfg.swing_apex,
                    prev=swing,
                )
                x0_mpc = self._measure_mpc_state(state)
                t_solve = time.perf_counter()
                sol = mpc.solve(x0_mpc, refs, rebuild=force_rebuild)
                self.bench_mpc.append(time.perf_counter() - t_solve)
                force_rebuild = False
                u = wrench_to_plant_input(sol, self.mpc_config.variant)

            if self.record:
                self._log_tick(log, tick, state, u, plan_id)
            com_trace[tick] = state.dsrb.srb.p_com
            rp_max = max(rp_max, abs(state.dsrb.srb.theta_com[0]), abs(state.dsrb.srb.theta_com[1]))
            z_min = min(z_min, state.dsrb.srb.p_com[2])
            z_max = max(z_max, state.dsrb.srb.p_com[2])

            # advance the plant
            try:
                state = step_plant(state, u, self.disturbances, dt, params, self.locked)
            except EulerSingularityError:
                log.failures.append((t, "euler singularity"))
                failed = True
                n_ticks = tick + 1
                break

            # update the swing foot along its phase-parameterized path
            phase = min(state.t_step / max(plan.t[0], 1e-6), 1.0)
            if swing is not None:
                pos_rel, yaw = swing.pose(phase)
                state.swing_pos = pos_rel + np.array([*state.stance.p_stf[:2], 0.0])
                state.swing_yaw = yaw

            # time-triggered impact at the plan's first period
            if state.t_step >= plan.t[0] - 1e-9:
                yaws = yaw_schedule(om, plan, state.stance.psi_stf)
                stance_xy = stance_positions(plan, yaws)
                landing_rel = swing.landing if swing is not None else np.array(
                    [stance_xy[1][0], stance_xy[1][1], 0.0]
                )
                landing = landing_rel + np.array([*state.stance.p_stf[:2], 0.0])
                landing_yaw = yaws[1]
                rz_t = rot_z(state.stance.psi_stf).T
                l_realized = (rz_t @ (landing - state.stance.p_stf))[:2]
                log.steps.append(
                    StepRecord(
                        t_impact=state.t,
                        period=state.t_step,
                        length=l_realized,
                        side=state.stance.side,
                    )
                )
                state, failure = apply_impact(
                    state, landing, landing_yaw, params, scfg.leg_reach
                )
                if failure is not None:
                    log.failures.append((state.t, failure))
                plan = warm_start_shift(plan, 0.0, stepped=True)
                refs_steps = build_step_references(
                    PlannerQuery(
                        x0=AlipState(0, 0, 0, 0),
                        t_curr=0.0,
                        stance_side=state.stance.side,
                        v_cmd=(vx, vy),
                        omega_cmd=om,
                    ),
                    pcfg,
                    params,
                )
                swing = None
                force_rebuild = True

        if self.record:
            self._log_tick(log, n_ticks, state, u, plan_id)
            log.time = log.time[: n_ticks + 1]
            log.x = log.x[: n_ticks + 1]
            log.u = log.u[: n_ticks + 1]
            log.stance_side = log.stance_side[: n_ticks + 1]
            log.p_stf = log.p_stf[: n_ticks + 1]
            log.psi_stf = log.psi_stf[: n_ticks + 1]
            log.t_step = log.t_step[: n_ticks + 1]
            log.plan_id = log.plan_id[: n_ticks + 1]
            log.swing_pos = log.swing_pos[: n_ticks + 1]
        com_trace[n_ticks] = state.dsrb.srb.p_com
        rp_max = max(rp_max, abs(state.dsrb.srb.theta_com[0]), abs(state.dsrb.srb.theta_com[1]))
        z_min = min(z_min, state.dsrb.srb.p_com[2])
        z_max = max(z_max, state.dsrb.srb.p_com[2])

        band = self.sim_config.height_band
        ok = (
            not failed
            and not log.failures
            and rp_max <= self.sim_config.roll_pitch_limit
            and z_min >= band[0] * params.p_z_des
            and z_max <= band[1] * params.p_z_des
        )
        log.success = bool(ok)
        log.metrics = {
            "final_yaw": float(state.dsrb.srb.theta_com[2]),
            "max_roll_pitch": float(rp_max),
            "z_range": [float(z_min), float(z_max)],
            "final_com": [float(v) for v in state.dsrb.srb.p_com],
            "mean_com_xy": [float(v) for v in com_trace[: n_ticks + 1, :2].mean(axis=0)],
        }
        self._velocity_metrics(log, com_trace[: n_ticks + 1])
        return log

    def _log_tick(self, log, i, state, u, plan_id):
        log.time[i] = state.t
        log.x[i] = state.dsrb.as_array()
        log.u[i] = u.as_array()
        log.stance_side[i] = 0 if state.stance.side == LEFT else 1
        log.p_stf[i] = state.stance.p_stf
        log.psi_stf[i] = state.stance.psi_stf
        log.t_step[i] = state.t_step
        log.plan_id[i] = plan_id
        log.swing_pos[i] = state.swing_pos

    def _velocity_metrics(self, log: EpisodeLog, com: np.ndarray) -> None:
        dt = self.sim_config.dt_sim
        n = com.shape[0]
        if n < int(2.0 / dt) + 10:
            return
        # settled window: after a 2 s transient
        i0 = int(2.0 / dt)
        span = (n - 1 - i0) * dt
        if span <= 0:
            return
        mean_v = (com[n - 1, :2] - com[i0, :2]) / span
        vx_cmd, vy_cmd, _ = self.command.at(log.time[-1] if log.n_ticks else 0.0)
        log.metrics["settled_mean_velocity"] = [float(mean_v[0]), float(mean_v[1])]
        log.metrics["velocity_error"] = [
            float(mean_v[0] - vx_cmd),
            float(mean_v[1] - vy_cmd),
        ]


def run_episode(
    params: ModelParams,
    planner_config: PlannerConfig,
    mpc_config: MpcConfig,
    sim_config: SimConfig,
    command: CommandProfile | None = None,
    disturbances: list[Disturbance] | None = None,
    seed: int = 0,
    record: bool = True,
) -> EpisodeLog:
    runner = EpisodeRunner(
        params,
        planner_config,
        mpc_config,
        sim_config,
        command=command,
        disturbances=disturbances,
        seed=seed,
        record=record,
    )
    return runner.run()


def success(log: EpisodeLog, sim_config: SimConfig) -> bool:
    """Episode verdict from the recorded trace."""
    if log.n_ticks == 0:
        raise ValueError("empty episode log")
    return bool(log.success)


def pelvis_yaw_after_recovery(
    log: EpisodeLog, t_push: float, settle: float = 3.0
) -> float:
    """Base yaw a settle interval after the disturbance."""
    t_eval = t_push + settle
    if log.n_ticks == 0 or log.time[-1] + 1e-9 < t_eval:
        raise ValueError("log does not span the settle window")
    idx = int(np.searchsorted(log.time, t_eval - 1e-9))
    idx = min(idx, log.n_ticks - 1)
    return float(log.x[idx, 5])
