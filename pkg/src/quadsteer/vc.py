"""Low-level whole-body control by virtual output constraints.

Each gait segment defines a vector of outputs — torso orientation, center of
mass, and the swinging feet — together with Bézier reference curves in a
normalized phase s in [0, 1].  A small QP allocates joint torques and ground
reaction forces so the output error obeys a PD law, subject to exact stance
(no foot acceleration) rows, friction pyramids, and torque limits.  Tracking
rows carry a heavily weighted slack so the allocation degrades gracefully
instead of going infeasible when torque bounds bind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .gait import ContactId, GaitGraph
from .qp import QpProblem, QpSolution, QpStatus, solve_qp
from .rigid_body import NU, NV, FullState, Kinematics, RobotModel, bias_forces, mass_matrix


# ---------------------------------------------------------------------------
# Bézier curves


@dataclass(frozen=True)
class BezierCurve:
    """Polynomial curve in Bernstein form; rows of `points` are control points."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("need at least one control point")
        object.__setattr__(self, "points", pts)

    @property
    def degree(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def value(self, s: float) -> np.ndarray:
        pts = self.points.copy()
        for _ in range(self.degree):  # de Casteljau
            pts = (1.0 - s) * pts[:-1] + s * pts[1:]
        return pts[0]

    def derivative(self) -> "BezierCurve":
        n = self.degree
        if n == 0:
            return BezierCurve(np.zeros((1, self.dim)))
        return BezierCurve(n * np.diff(self.points, axis=0))

    def velocity(self, s: float) -> np.ndarray:
        return self.derivative().value(s)

    def acceleration(self, s: float) -> np.ndarray:
        return self.derivative().derivative().value(s)


def bernstein_matrix(degree: int, s_values) -> np.ndarray:
    s = np.asarray(s_values, dtype=float)
    M = np.zeros((s.size, degree + 1))
    for j in range(degree + 1):
        M[:, j] = comb(degree, j) * s ** j * (1.0 - s) ** (degree - j)
    return M


def fit_bezier(samples, degree: int | None = None) -> BezierCurve:
    """Curve interpolating the sample rows at uniformly spaced phases.

    With degree = len(samples) - 1 (the default) the interpolation is exact.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    k = samples.shape[0]
    if degree is None:
        degree = k - 1
    if degree != k - 1:
        raise ValueError("exact interpolation needs degree = len(samples) - 1")
    if k == 1:
        return BezierCurve(samples)
    s = np.linspace(0.0, 1.0, k)
    M = bernstein_matrix(degree, s)
    return BezierCurve(np.linalg.solve(M, samples))


# control points of the degree-5 smooth step (zero velocity and acceleration
# at both ends) and of the degree-5 form of the bump 16 s^2 (1-s)^2
_STEP5 = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
_BUMP5 = np.array([0.0, 0.0, 1.6, 1.6, 0.0, 0.0])


def swing_curve(start, end, apex: float = 0.05) -> BezierCurve:
    """Degree-5 world-frame swing trajectory between two ground points.

    The horizontal motion is a smooth step (no velocity or acceleration at
    liftoff and touchdown); the vertical profile is a symmetric bump that
    peaks at `apex` above the higher endpoint, returning to end height.
    """
    start = np.asarray(start, dtype=float).reshape(-1)
    end = np.asarray(end, dtype=float).reshape(-1)
    if start.size == 2:
        start = np.append(start, 0.0)
    if end.size == 2:
        end = np.append(end, 0.0)
    pts = np.zeros((6, 3))
    for i in range(6):
        pts[i, :2] = start[:2] + _STEP5[i] * (end[:2] - start[:2])
        pts[i, 2] = start[2] + _STEP5[i] * (end[2] - start[2]) + _BUMP5[i] * apex
    return BezierCurve(pts)


# ---------------------------------------------------------------------------
# Segment plans


@dataclass
class SegmentPlan:
    """Reference data for one gait segment (one MPC event's open-loop span)."""

    stance: tuple[ContactId, ...]
    duration: float
    com_curve: BezierCurve                  # horizontal COM, 2 columns
    com_height: float = 0.5
    swing: dict = field(default_factory=dict)   # ContactId -> 3D BezierCurve
    rpy_desired: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.stance = tuple(sorted(self.stance))
        self.rpy_desired = np.asarray(self.rpy_desired, dtype=float).reshape(3)
        if self.duration <= 0.0:
            raise ValueError("segment duration must be positive")
        if self.com_curve.dim != 2:
            raise ValueError("com curve must have two columns (x, y)")
        overlap = set(self.stance) & set(self.swing)
        if overlap:
            raise ValueError(f"feet cannot both stand and swing: {overlap}")

    @property
    def swing_feet(self) -> tuple:
        return tuple(sorted(self.swing))

    @property
    def num_outputs(self) -> int:
        return 6 + 3 * len(self.swing)

    def phase(self, t: float) -> float:
        return float(np.clip(t / self.duration, 0.0, 1.0))


def plan_from_event(solution, graph: GaitGraph, duration: float,
                    com_height: float = 0.5, apex: float = 0.05,
                    swing_starts: dict | None = None) -> SegmentPlan:
    """Segment plan for the event's first domain, tracking its MPC prediction.

    `solution` is an event solve result carrying `zetas` and `predicted_states`.
    The horizontal COM curve interpolates the first grid_count + 1 predicted
    states.  Swing start points default to the graph's previous footholds;
    pass `swing_starts` to begin from measured foot positions instead.
    """
    Nd = graph.grid_count
    zeta = int(solution.zetas[0])
    domain = graph.domain(zeta)
    com_pts = solution.predicted_states[:Nd + 1, [0, 2]]
    com = fit_bezier(com_pts)
    swing = {}
    for leg in graph.swing_feet(zeta):
        liftoff, touchdown = graph.swing_segment(leg, zeta)
        start = liftoff if swing_starts is None else swing_starts.get(leg, liftoff)
        swing[leg] = swing_curve(start, touchdown, apex)
    return SegmentPlan(stance=domain.active, duration=float(duration),
                       com_curve=com, com_height=com_height, swing=swing)


def stand_plan(com_xy, duration: float, com_height: float = 0.5) -> SegmentPlan:
    """All-feet stance holding the COM over a fixed ground point."""
    pt = np.asarray(com_xy, dtype=float).reshape(2)
    return SegmentPlan(stance=tuple(ContactId), duration=duration,
                       com_curve=BezierCurve(np.tile(pt, (2, 1))),
                       com_height=com_height)


# ---------------------------------------------------------------------------
# Output evaluation


@dataclass
class OutputData:
    """Measured outputs, their Jacobian/drift, and the reference at phase s."""

    y: np.ndarray
    ydot: np.ndarray
    jacobian: np.ndarray     # num_outputs x NV
    drift: np.ndarray        # Jdot qdot
    y_des: np.ndarray
    ydot_des: np.ndarray
    yddot_des: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.y - self.y_des

    @property
    def error_rate(self) -> np.ndarray:
        return self.ydot - self.ydot_des


def evaluate_outputs(model: RobotModel, kin: Kinematics, plan: SegmentPlan,
                     s: float) -> OutputData:
    ny = plan.num_outputs
    y = np.zeros(ny)
    J = np.zeros((ny, NV))
    drift = np.zeros(ny)

    y[0:3] = kin.q[3:6]
    J[0, 3] = J[1, 4] = J[2, 5] = 1.0
    y[3:6] = kin.com()
    J[3:6] = kin.com_jacobian()
    drift[3:6] = kin.com_acceleration()
    for i, leg in enumerate(plan.swing_feet):
        r = slice(6 + 3 * i, 9 + 3 * i)
        y[r] = kin.foot_position(leg)
        J[r] = kin.foot_jacobian(leg)
        drift[r] = kin.foot_drift(leg)
    ydot = J @ kin.qdot

    y_des = np.zeros(ny)
    yd_dot = np.zeros(ny)
    yd_ddot = np.zeros(ny)
    sdot = 1.0 / plan.duration
    y_des[0:3] = plan.rpy_desired
    y_des[3:5] = plan.com_curve.value(s)
    y_des[5] = plan.com_height
    yd_dot[3:5] = plan.com_curve.velocity(s) * sdot
    yd_ddot[3:5] = plan.com_curve.acceleration(s) * sdot ** 2
    for i, leg in enumerate(plan.swing_feet):
        r = slice(6 + 3 * i, 9 + 3 * i)
        curve = plan.swing[leg]
        y_des[r] = curve.value(s)
        yd_dot[r] = curve.velocity(s) * sdot
        yd_ddot[r] = curve.acceleration(s) * sdot ** 2
    return OutputData(y, ydot, J, drift, y_des, yd_dot, yd_ddot)


# ---------------------------------------------------------------------------
# Torque allocation QP


@dataclass(frozen=True)
class Gains:
    kp: float = 100.0
    kd: float = 20.0

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be nonnegative")


@dataclass(frozen=True)
class AllocatorConfig:
    slack_weight: float = 1.0e7
    friction_coeff: float = 0.4
    fz_min: float = 0.0
    torque_limit: float | None = None    # None: take the model's limit
    # small curvature on the contact forces: without it the force block of
    # the Hessian is flat, and saturated instances sit on degenerate vertex
    # ties (an unloaded foot's pyramid rows all collapse onto Fz >= 0)
    force_weight: float = 1.0e-4

    def __post_init__(self):
        if self.slack_weight <= 0:
            raise ValueError("slack weight must be positive")
        if self.force_weight < 0:
            raise ValueError("force weight must be nonnegative")


def qp_dimension(num_actuated: int, num_stance: int, num_outputs: int) -> int:
    """Decision-variable count: torques, stance force components, slacks."""
    return num_actuated + 3 * num_stance + num_outputs


@dataclass
class AllocatorLayout:
    num_stance: int
    num_outputs: int
    slack_scale: float = 1.0     # physical defect = slack_scale * decision value

    @property
    def tau(self) -> slice:
        return slice(0, NU)

    @property
    def forces(self) -> slice:
        return slice(NU, NU + 3 * self.num_stance)

    @property
    def slack(self) -> slice:
        n0 = NU + 3 * self.num_stance
        return slice(n0, n0 + self.num_outputs)


def build_allocator_qp(model: RobotModel, kin: Kinematics, plan: SegmentPlan,
                       outputs: OutputData, gains: Gains = Gains(),
                       config: AllocatorConfig = AllocatorConfig()
                       ) -> tuple[QpProblem, AllocatorLayout]:
    """Assemble the torque/force/slack QP for one control step.

    Equalities: output dynamics rows (with slack) commanding the PD law, and
    exact stance rows (zero stance-foot acceleration).  Inequalities: per-axis
    friction pyramids; bounds: torque box, nonnegative normal forces.
    """
    D = mass_matrix(model, kin.q, kin)
    H = bias_forces(model, kin.q, kin.qdot, kin)
    U = model.actuation_matrix()

    nc = len(plan.stance)
    ny = plan.num_outputs
    n = qp_dimension(NU, nc, ny)
    layout = AllocatorLayout(nc, ny, 1.0 / np.sqrt(config.slack_weight))

    Jc = np.zeros((3 * nc, NV))
    drift_c = np.zeros(3 * nc)
    for i, leg in enumerate(plan.stance):
        Jc[3 * i:3 * i + 3] = kin.foot_jacobian(leg)
        drift_c[3 * i:3 * i + 3] = kin.foot_drift(leg)

    Dinv_U = np.linalg.solve(D, U)
    Dinv_Jt = np.linalg.solve(D, Jc.T) if nc else np.zeros((NV, 0))
    Dinv_H = np.linalg.solve(D, H)

    v_cmd = (outputs.yddot_des - gains.kp * outputs.error
             - gains.kd * outputs.error_rate)

    # the slack columns are scaled by 1/sqrt(gamma) so the Hessian stays
    # unit-diagonal; the physical defect is slack_scale * z_slack
    slack_scale = layout.slack_scale
    A = np.zeros((ny + 3 * nc, n))
    b = np.zeros(ny + 3 * nc)
    Jy = outputs.jacobian
    A[:ny, layout.tau] = Jy @ Dinv_U
    A[:ny, layout.forces] = Jy @ Dinv_Jt
    A[:ny, layout.slack] = slack_scale * np.eye(ny)
    b[:ny] = v_cmd - outputs.drift + Jy @ Dinv_H
    if nc:
        A[ny:, layout.tau] = Jc @ Dinv_U
        A[ny:, layout.forces] = Jc @ Dinv_Jt
        b[ny:] = Jc @ Dinv_H - drift_c

    H_qp = np.zeros((n, n))
    H_qp[layout.tau, layout.tau] = np.eye(NU)
    if nc:
        H_qp[layout.forces, layout.forces] = config.force_weight * np.eye(3 * nc)
    H_qp[layout.slack, layout.slack] = np.eye(ny)
    g = np.zeros(n)

    mu_axis = config.friction_coeff / np.sqrt(2.0)
    G = np.zeros((4 * nc, n))
    h = np.zeros(4 * nc)
    for i in range(nc):
        fx, fy, fz = NU + 3 * i, NU + 3 * i + 1, NU + 3 * i + 2
        for r, (col, sign) in enumerate(((fx, 1.0), (fx, -1.0), (fy, 1.0), (fy, -1.0))):
            G[4 * i + r, col] = sign
            G[4 * i + r, fz] = -mu_axis

    tau_max = model.torque_limit if config.torque_limit is None else config.torque_limit
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[layout.tau] = -tau_max
    upper[layout.tau] = tau_max
    for i in range(nc):
        lower[NU + 3 * i + 2] = config.fz_min

    problem = QpProblem(hessian=H_qp, linear_cost=g, eq_matrix=A, eq_vector=b,
                        ineq_matrix=G, ineq_vector=h, lower=lower, upper=upper)
    return problem, layout


class ControllerInfeasibleError(RuntimeError):
    """The torque allocation QP failed to reach an optimal point."""

    def __init__(self, status: QpStatus, detail: str = ""):
        self.status = status
        super().__init__(f"torque allocation QP ended {status.name}"
                         + (f": {detail}" if detail else ""))


@dataclass
class ControlResult:
    torques: np.ndarray            # NU actuated torques
    stance_forces: np.ndarray      # n_c x 3, ordered like plan.stance
    slack: np.ndarray
    outputs: OutputData
    objective: float
    iterations: int

    @property
    def slack_norm(self) -> float:
        return float(np.linalg.norm(self.slack))


def control_step(model: RobotModel, state: FullState, plan: SegmentPlan,
                 t_in_segment: float, gains: Gains = Gains(),
                 config: AllocatorConfig = AllocatorConfig(),
                 qp_tol: float = 1e-8, kin: Kinematics | None = None) -> ControlResult:
    """Evaluate outputs at the given segment time and solve the allocation."""
    s = plan.phase(t_in_segment)
    if kin is None:
        kin = Kinematics(model, state.q, state.qdot)
    outputs = evaluate_outputs(model, kin, plan, s)
    problem, layout = build_allocator_qp(model, kin, plan, outputs, gains, config)
    sol: QpSolution = solve_qp(problem, tol=qp_tol)
    if sol.status is not QpStatus.OPTIMAL:
        raise ControllerInfeasibleError(sol.status,
                                        f"kkt worst {sol.kkt.worst():.2e}")
    x = sol.x_star
    return ControlResult(
        torques=x[layout.tau].copy(),
        stance_forces=x[layout.forces].reshape(-1, 3).copy(),
        slack=layout.slack_scale * x[layout.slack],
        outputs=outputs,
        objective=sol.objective,
        iterations=sol.iterations,
    )
