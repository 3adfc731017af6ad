"""Closed-loop full-order simulation: event MPC over a whole-body controller.

The runner advances the articulated model on a fixed integer-step timeline:
the simulator ticks at dt_sim, the torque allocator at the control rate, and
the MPC exactly at domain boundaries (every N_d LIP samples).  Measurement
latency delays both torque application and plan handoff by an integer number
of simulator steps, while schedule-driven contact switches (with a plastic
impact map in rigid mode) stay on the boundary.  All scheduling is integer
arithmetic so repeated runs are bit-identical; wall-clock solve times are
recorded but quarantined from deterministic outputs.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .gait import ALL_FEET, GaitGraph, domain_indicator
from .lip import LipParams, equilibrium_state
from .mpc import EventMpc, MpcConfig, MpcInfeasibleError
from .rigid_body import (NU, NV, CompliantGround, FullState, Kinematics,
                         PitchGuardError, RobotModel, bias_forces,
                         compliant_contact_forces, constrained_forward_dynamics,
                         impact_map, initial_stance_state, mass_matrix)
from .vc import (AllocatorConfig, ControllerInfeasibleError, Gains,
                 control_step, plan_from_event)

FOOT_COLUMNS = [f"F_{leg.name}_{ax}" for leg in ALL_FEET for ax in ("x", "y", "z")]


def _step_count(value: float, dt: float, name: str) -> int:
    n = int(round(value / dt))
    if n < 1 or abs(n * dt - value) > 1e-9:
        raise ValueError(f"{name} = {value} is not a positive integer multiple "
                         f"of dt_sim = {dt}")
    return n


@dataclass(frozen=True)
class RunnerConfig:
    dt_sim: float = 1e-3
    control_rate_hz: float = 1000.0
    latency: float = 0.0
    settle_events: int = 4
    swing_apex: float = 0.05
    output_bound: float = 0.5
    contact_model: str = "rigid"          # "rigid" | "compliant"
    gains: Gains = field(default_factory=Gains)
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)
    mpc_tol: float = 1e-9
    qp_tol: float = 1e-8
    ground_stiffness: float = 3.0e4
    ground_damping: float = 500.0
    bristle_stiffness: float = 1.0e4
    bristle_damping: float = 100.0

    def __post_init__(self):
        if self.contact_model not in ("rigid", "compliant"):
            raise ValueError("contact_model must be 'rigid' or 'compliant'")
        if self.settle_events < 0:
            raise ValueError("settle_events must be nonnegative")
        if self.output_bound <= 0:
            raise ValueError("output_bound must be positive")


@dataclass
class EventRecord:
    index: int
    sample: int
    zeta: int
    x_measured: np.ndarray
    objective: float
    qp_iterations: int
    stance: tuple
    plan_cops: np.ndarray    # the grid_count applied COP inputs of this plan
    solve_us: float          # wall clock; excluded from deterministic outputs


@dataclass
class FullOrderResult:
    """Complete trace of one full-order run.

    Simulation rows are per dt_sim step; control rows are per allocator
    solve.  `forces` hold the physically applied ground reactions (zeros for
    airborne feet); `ctrl_forces` hold the allocator's planned stance forces.
    """

    completed: bool
    abort_reason: str | None
    num_events: int
    steps_per_segment: int
    target_xy: np.ndarray
    # per simulation step
    times: np.ndarray
    q: np.ndarray                 # (n+1, NV) including the initial state
    qdot: np.ndarray
    com_states: np.ndarray        # (n+1, 4) LIP-style (r_x, v_x, r_y, v_y)
    forces: np.ndarray            # (n, 12) by foot, zeros when airborne
    applied_torques: np.ndarray   # (n, NU)
    pyramid_violation: np.ndarray
    stance_residual: np.ndarray   # rigid mode; NaN for compliant
    # per control step
    ctrl_times: np.ndarray
    ctrl_phase: np.ndarray
    ctrl_zeta: np.ndarray
    output_norm: np.ndarray
    output_rate_norm: np.ndarray
    slack_norm: np.ndarray
    ctrl_torques: np.ndarray      # commanded (pre-latency)
    ctrl_forces: np.ndarray
    ctrl_solve_us: np.ndarray
    ctrl_step_index: np.ndarray
    events: list

    @property
    def num_steps(self) -> int:
        return self.times.size

    @property
    def final_com_error(self) -> float:
        return float(np.linalg.norm(self.com_states[-1, [0, 2]] - self.target_xy))

    @property
    def max_output_norm(self) -> float:
        return float(self.output_norm.max()) if self.output_norm.size else float("nan")

    def domain_output_decay(self) -> list:
        """Per event segment: (first, last) output-error norms.

        Meaningful for zero-latency runs, where the first control solve of a
        segment already tracks that segment's fresh reference.
        """
        out = []
        for m in range(self.num_events):
            lo, hi = m * self.steps_per_segment, (m + 1) * self.steps_per_segment
            idx = np.nonzero((self.ctrl_step_index >= lo)
                             & (self.ctrl_step_index < hi))[0]
            if idx.size:
                out.append((float(self.output_norm[idx[0]]),
                            float(self.output_norm[idx[-1]])))
        return out

    def write_trajectory_csv(self, path):
        """Per-step state trace: t, q..., qdot..., COM plane state, forces."""
        header = (["t"] + [f"q{i}" for i in range(NV)]
                  + [f"qd{i}" for i in range(NV)]
                  + ["com_x", "com_vx", "com_y", "com_vy"] + FOOT_COLUMNS)
        n = self.num_steps
        data = np.hstack([self.times[:, None], self.q[:n], self.qdot[:n],
                          self.com_states[:n], self.forces])
        _write_csv(path, header, data)

    def write_diagnostics_csv(self, path):
        """Per-control-step diagnostics.

        Wall-clock solve times are deliberately excluded so the file is
        byte-stable across identical runs; they live in the timing report.
        """
        header = (["t", "s", "zeta", "y_norm", "ydot_norm", "omega_norm"]
                  + [f"tau{i+1}" for i in range(NU)] + FOOT_COLUMNS)
        data = np.hstack([
            self.ctrl_times[:, None], self.ctrl_phase[:, None],
            self.ctrl_zeta[:, None], self.output_norm[:, None],
            self.output_rate_norm[:, None], self.slack_norm[:, None],
            self.ctrl_torques, self.ctrl_forces,
        ])
        _write_csv(path, header, data)

    def summary_dict(self) -> dict:
        """Deterministic summary (no wall-clock content)."""
        decay = self.domain_output_decay()
        return {
            "completed": self.completed,
            "abort_reason": self.abort_reason,
            "num_events": self.num_events,
            "num_steps": self.num_steps,
            "mpc_solves": len(self.events),
            "allocator_solves": int(self.ctrl_times.size),
            "final_com_error": self.final_com_error,
            "max_output_norm": self.max_output_norm,
            "max_slack_norm": float(self.slack_norm.max()) if self.slack_norm.size else None,
            "max_pyramid_violation": float(np.nanmax(self.pyramid_violation))
            if self.pyramid_violation.size else None,
            "max_stance_residual": float(np.nanmax(self.stance_residual))
            if self.stance_residual.size and np.isfinite(self.stance_residual).any()
            else None,
            "domain_output_decay": [[a, b] for a, b in decay],
        }


def _write_csv(path, header, data):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(data):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def measure_lip_state(kin: Kinematics) -> np.ndarray:
    """COM position/velocity in the reduced model's state order."""
    com = kin.com()
    vcom = kin.com_velocity()
    return np.array([com[0], vcom[0], com[1], vcom[1]])


def run_full_order(model: RobotModel, graph: GaitGraph, params: LipParams,
                   mpc_config: MpcConfig, config: RunnerConfig = RunnerConfig(),
                   progress=None) -> FullOrderResult:
    """Run the full pipeline on one gait graph; see the module docstring.

    Raises ValueError for inconsistent timing configuration; physical or
    solver failures end the run early with `abort_reason` set instead of
    raising.
    """
    dt = config.dt_sim
    steps_per_sample = _step_count(params.sample_time, dt, "sample_time")
    ctrl_every = _step_count(1.0 / config.control_rate_hz, dt, "control period")
    lat_steps = 0 if config.latency == 0 else _step_count(config.latency, dt, "latency")
    Nd = graph.grid_count
    steps_per_seg = steps_per_sample * Nd
    num_events = graph.num_domains + config.settle_events
    total_steps = num_events * steps_per_seg
    seg_duration = Nd * params.sample_time

    bundle = EventMpc(mpc_config, graph, params)
    target_xy = mpc_config.target_state[[0, 2]]

    first = graph.domains[0]
    if set(first.active) != set(ALL_FEET):
        raise ValueError("the first domain must be a four-foot stance so the "
                         "robot can start standing")
    x_start = equilibrium_state(first.centroid())
    footholds = {leg: first.foothold(leg) for leg in first.active}
    state = initial_stance_state(
        model, footholds, (x_start[0], x_start[2], params.com_height))
    current_stance = first.active

    ground = None
    if config.contact_model == "compliant":
        ground = CompliantGround(stiffness=config.ground_stiffness,
                                 damping=config.ground_damping,
                                 sigma0=config.bristle_stiffness,
                                 sigma1=config.bristle_damping,
                                 friction_coeff=params.friction_coeff)

    n = total_steps
    times = np.zeros(n)
    q_hist = np.zeros((n + 1, NV))
    qd_hist = np.zeros((n + 1, NV))
    com_hist = np.zeros((n + 1, 4))
    force_hist = np.zeros((n, 12))
    tau_hist = np.zeros((n, NU))
    pyr_hist = np.zeros(n)
    resid_hist = np.full(n, np.nan)
    ctrl_rows = []           # (step, s, zeta, y, ydot, omega, tau(12), F(12), us)
    events = []

    plan = None
    plan_origin = 0
    plan_queue = deque()
    tau_queue = deque()
    tau_now = np.zeros(NU)
    zeta_now = 1
    abort = None

    q_hist[0], qd_hist[0] = state.q, state.qdot

    step = 0
    while step < total_steps:
        # --- domain boundary: contact switch, impact, MPC event -----------
        if step % steps_per_seg == 0:
            m = step // steps_per_seg
            k = m * Nd
            sol = None
            try:
                kin_pre = Kinematics(model, state.q, state.qdot)
            except PitchGuardError as err:
                abort = f"pitch_guard: {err}"
                break
            zeta_now = domain_indicator(k, graph.num_domains, graph.grid_count)
            domain = graph.domain(zeta_now)
            entering = set(domain.active) - set(current_stance)
            if config.contact_model == "rigid" and entering:
                state = impact_map(model, state, domain.active)
            current_stance = domain.active

            kin = Kinematics(model, state.q, state.qdot)
            x_meas = measure_lip_state(kin)
            t0 = time.perf_counter()
            try:
                sol, _ = bundle.solve(x_meas, k)
            except MpcInfeasibleError:
                abort = f"mpc_infeasible at event {m} (t = {step * dt:.3f} s)"
                break
            solve_us = (time.perf_counter() - t0) * 1e6
            events.append(EventRecord(
                index=m, sample=k, zeta=zeta_now, x_measured=x_meas,
                objective=sol.objective, qp_iterations=sol.iterations,
                stance=tuple(leg.name for leg in current_stance),
                plan_cops=sol.cop_sequence[:Nd].copy(),
                solve_us=solve_us))
            if progress is not None:
                err = np.linalg.norm(x_meas - mpc_config.target_state)
                progress(f"event {m:3d}  zeta {zeta_now:2d}  |x-x_f| {err:.5f}")

            swing_starts = {leg: kin.foot_position(leg)
                            for leg in graph.swing_feet(zeta_now)}
            new_plan = plan_from_event(sol, graph, seg_duration,
                                       com_height=params.com_height,
                                       apex=config.swing_apex,
                                       swing_starts=swing_starts)
            if plan is None or lat_steps == 0:
                plan, plan_origin = new_plan, step
            else:
                plan_queue.append((step + lat_steps, new_plan, step))

        while plan_queue and plan_queue[0][0] <= step:
            _, plan, plan_origin = plan_queue.popleft()

        kin = Kinematics(model, state.q, state.qdot)
        com_hist[step] = measure_lip_state(kin)

        # --- control update ------------------------------------------------
        if step % ctrl_every == 0:
            t_in_seg = (step - plan_origin) * dt
            t0 = time.perf_counter()
            try:
                res = control_step(model, state, plan, t_in_seg,
                                   config.gains, config.allocator,
                                   qp_tol=config.qp_tol, kin=kin)
            except ControllerInfeasibleError as err:
                abort = f"allocator_infeasible at t = {step * dt:.3f} s ({err})"
                break
            solve_us = (time.perf_counter() - t0) * 1e6
            y_norm = float(np.linalg.norm(res.outputs.error))
            f_row = np.zeros(12)
            for leg, F in zip(plan.stance, res.stance_forces):
                f_row[3 * leg:3 * leg + 3] = F
            ctrl_rows.append((step, plan.phase(t_in_seg), zeta_now, y_norm,
                              float(np.linalg.norm(res.outputs.error_rate)),
                              res.slack_norm, res.torques.copy(), f_row, solve_us))
            if y_norm > config.output_bound:
                abort = (f"output_bound_exceeded at t = {step * dt:.3f} s "
                         f"(|y| = {y_norm:.3f} > {config.output_bound})")
                break
            if lat_steps == 0:
                tau_now = res.torques
            else:
                tau_queue.append((step + lat_steps, res.torques))

        while tau_queue and tau_queue[0][0] <= step:
            tau_now = tau_queue.popleft()[1]

        # --- physics --------------------------------------------------------
        try:
            if config.contact_model == "rigid":
                qdd1, fc = constrained_forward_dynamics(
                    model, state, tau_now, current_stance, kin=kin)
                resid = 0.0
                for i, leg in enumerate(fc.feet):
                    resid = max(resid, float(np.abs(
                        kin.foot_jacobian(leg) @ qdd1 + kin.foot_drift(leg)).max()))
                resid_hist[step] = resid
                mid = FullState(state.q + 0.5 * dt * state.qdot,
                                state.qdot + 0.5 * dt * qdd1)
                kin_mid = Kinematics(model, mid.q, mid.qdot)
                qdd2, _ = constrained_forward_dynamics(
                    model, mid, tau_now, current_stance, kin=kin_mid)
                new_state = FullState(state.q + dt * mid.qdot,
                                      state.qdot + dt * qdd2)
            else:
                fc = compliant_contact_forces(model, state, ground, dt, kin)
                gen_ext = np.zeros(NV)
                for leg, F in zip(fc.feet, fc.forces):
                    gen_ext += kin.foot_jacobian(leg).T @ F
                U = model.actuation_matrix()
                qdd1 = _free_accel(model, state, kin, U @ tau_now + gen_ext)
                mid = FullState(state.q + 0.5 * dt * state.qdot,
                                state.qdot + 0.5 * dt * qdd1)
                kin_mid = Kinematics(model, mid.q, mid.qdot)
                qdd2 = _free_accel(model, mid, kin_mid, U @ tau_now + gen_ext)
                new_state = FullState(state.q + dt * mid.qdot,
                                      state.qdot + dt * qdd2)
        except PitchGuardError as err:
            abort = f"pitch_guard at t = {step * dt:.3f} s ({err})"
            break

        times[step] = step * dt
        tau_hist[step] = tau_now
        for leg, F in zip(fc.feet, fc.forces):
            force_hist[step, 3 * leg:3 * leg + 3] = F
        pyr_hist[step] = fc.pyramid_violation(params.friction_coeff)
        state = new_state
        q_hist[step + 1], qd_hist[step + 1] = state.q, state.qdot
        step += 1

    n_done = step
    try:
        com_hist[n_done] = measure_lip_state(
            Kinematics(model, state.q, state.qdot))
    except PitchGuardError:
        com_hist[n_done] = np.nan
    nc = len(ctrl_rows)
    ctrl_step_index = np.array([r[0] for r in ctrl_rows], dtype=int)
    result = FullOrderResult(
        completed=abort is None,
        abort_reason=abort,
        num_events=num_events,
        steps_per_segment=steps_per_seg,
        target_xy=target_xy,
        times=times[:n_done],
        q=q_hist[:n_done + 1],
        qdot=qd_hist[:n_done + 1],
        com_states=com_hist[:n_done + 1],
        forces=force_hist[:n_done],
        applied_torques=tau_hist[:n_done],
        pyramid_violation=pyr_hist[:n_done],
        stance_residual=resid_hist[:n_done],
        ctrl_times=ctrl_step_index.astype(float) * dt,
        ctrl_phase=np.array([r[1] for r in ctrl_rows]),
        ctrl_zeta=np.array([r[2] for r in ctrl_rows], dtype=float),
        output_norm=np.array([r[3] for r in ctrl_rows]),
        output_rate_norm=np.array([r[4] for r in ctrl_rows]),
        slack_norm=np.array([r[5] for r in ctrl_rows]),
        ctrl_torques=(np.vstack([r[6] for r in ctrl_rows])
                      if nc else np.zeros((0, NU))),
        ctrl_forces=(np.vstack([r[7] for r in ctrl_rows])
                     if nc else np.zeros((0, 12))),
        ctrl_solve_us=np.array([r[8] for r in ctrl_rows]),
        ctrl_step_index=ctrl_step_index,
        events=events,
    )
    return result


def _free_accel(model: RobotModel, st: FullState, kin: Kinematics,
                gen_force: np.ndarray) -> np.ndarray:
    D = mass_matrix(model, st.q, kin)
    H = bias_forces(model, st.q, st.qdot, kin)
    return np.linalg.solve(D, gen_force - H)
