"""Floating-base rigid-body dynamics for a point-foot quadruped.

The robot is modeled as a tree of single-degree-of-freedom joints: three
world-aligned prismatic joints and a yaw-pitch-roll revolute triplet carry
the torso (so the base orientation coordinates are the Euler angles
themselves), and each leg adds an abduction joint plus two pitch joints.
All quantities are computed in world frame: the mass matrix by
composite-rigid-body assembly, bias forces by recursive Newton-Euler, and
contact handling by KKT-constrained accelerations, a plastic impact map, or
a spring-damper/bristle compliant model.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .gait import ALL_FEET, ContactId

NV = 18          # generalized coordinates / velocities
NU = 12          # actuated joints
GRAVITY = 9.81
PITCH_GUARD = np.radians(75.0)

# q layout: [base position (3), roll, pitch, yaw, 4 legs x (abduction, hip, knee)]
LEG_ORDER = (ContactId.FL, ContactId.FR, ContactId.RL, ContactId.RR)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _cross(a, b) -> np.ndarray:
    # np.cross carries broadcasting overhead that dominates at 3 elements
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _rot_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    K = _skew(axis)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


class PitchGuardError(RuntimeError):
    """Raised when the torso pitch leaves the Euler-singularity guard band."""


@dataclass(frozen=True)
class Link:
    """One chain element: a 1-DOF joint plus the body it carries."""

    name: str
    parent: int                 # chain index of the parent, -1 for the world
    joint_type: str             # "prismatic" | "revolute"
    axis: tuple                 # unit axis in the parent frame
    offset: tuple               # joint origin in the parent frame
    mass: float
    com: tuple                  # body-frame center of mass
    inertia: tuple              # 3x3 rotational inertia about the com, body frame
    gen_index: int              # index into q / qdot
    actuated: bool = False


@dataclass(frozen=True)
class RobotModel:
    links: tuple[Link, ...]
    feet: dict                  # ContactId -> (chain index, local point)
    torque_limit: float = 60.0
    gravity: float = GRAVITY

    def __post_init__(self):
        for i, ln in enumerate(self.links):
            if ln.parent >= i:
                raise ValueError("links must be ordered parents-first")
            if ln.joint_type not in ("prismatic", "revolute"):
                raise ValueError(f"unknown joint type {ln.joint_type!r}")
        gis = sorted(ln.gen_index for ln in self.links)
        if gis != list(range(NV)):
            raise ValueError("gen_index values must cover 0..17 exactly once")
        ancestors = []
        for i in range(len(self.links)):
            path = []
            j = i
            while j >= 0:
                path.append(j)
                j = self.links[j].parent
            ancestors.append(tuple(reversed(path)))
        object.__setattr__(self, "_ancestors", tuple(ancestors))

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def total_mass(self) -> float:
        return float(sum(ln.mass for ln in self.links))

    def actuation_matrix(self) -> np.ndarray:
        """NV x NU selector mapping actuated joint torques to generalized forces."""
        U = np.zeros((NV, NU))
        col = 0
        for ln in self.links:
            if ln.actuated:
                U[ln.gen_index, col] = 1.0
                col += 1
        if col != NU:
            raise ValueError(f"expected {NU} actuated joints, found {col}")
        return U

    def actuated_indices(self) -> np.ndarray:
        return np.array([ln.gen_index for ln in self.links if ln.actuated], dtype=int)

    def to_dict(self) -> dict:
        return {
            "links": [
                {
                    "name": ln.name, "parent": ln.parent, "joint_type": ln.joint_type,
                    "axis": list(ln.axis), "offset": list(ln.offset), "mass": ln.mass,
                    "com": list(ln.com), "inertia": [list(r) for r in ln.inertia],
                    "gen_index": ln.gen_index, "actuated": ln.actuated,
                }
                for ln in self.links
            ],
            "feet": {leg.name: [idx, list(pt)] for leg, (idx, pt) in self.feet.items()},
            "torque_limit": self.torque_limit,
            "gravity": self.gravity,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def model_from_dict(data: dict) -> RobotModel:
    links = tuple(
        Link(name=d["name"], parent=d["parent"], joint_type=d["joint_type"],
             axis=tuple(d["axis"]), offset=tuple(d["offset"]), mass=d["mass"],
             com=tuple(d["com"]), inertia=tuple(tuple(r) for r in d["inertia"]),
             gen_index=d["gen_index"], actuated=d.get("actuated", False))
        for d in data["links"]
    )
    feet = {ContactId[name]: (int(v[0]), np.asarray(v[1], dtype=float))
            for name, v in data["feet"].items()}
    return RobotModel(links=links, feet=feet,
                      torque_limit=float(data.get("torque_limit", 60.0)),
                      gravity=float(data.get("gravity", GRAVITY)))


def load_robot_model(path) -> RobotModel:
    path = str(path)
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return model_from_dict(tomllib.load(fh))
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def default_robot_model(torso_mass: float = 20.0, torso_length: float = 0.5,
                        torso_width: float = 0.3, link_mass: float = 1.0,
                        upper_length: float = 0.3, lower_length: float = 0.3,
                        torque_limit: float = 60.0) -> RobotModel:
    """Desk-scale quadruped: 20 kg torso, three 1 kg links per leg, point feet."""
    th = 0.15  # torso box height for inertia purposes
    tix = torso_mass * (torso_width ** 2 + th ** 2) / 12.0
    tiy = torso_mass * (torso_length ** 2 + th ** 2) / 12.0
    tiz = torso_mass * (torso_length ** 2 + torso_width ** 2) / 12.0

    def rod(length: float):
        i_bend = link_mass * length ** 2 / 12.0
        return ((i_bend, 0.0, 0.0), (0.0, i_bend, 0.0), (0.0, 0.0, 2e-4))

    links = [
        Link("base_x", -1, "prismatic", (1, 0, 0), (0, 0, 0), 0.0, (0, 0, 0),
             ((0,) * 3,) * 3, 0),
        Link("base_y", 0, "prismatic", (0, 1, 0), (0, 0, 0), 0.0, (0, 0, 0),
             ((0,) * 3,) * 3, 1),
        Link("base_z", 1, "prismatic", (0, 0, 1), (0, 0, 0), 0.0, (0, 0, 0),
             ((0,) * 3,) * 3, 2),
        Link("base_yaw", 2, "revolute", (0, 0, 1), (0, 0, 0), 0.0, (0, 0, 0),
             ((0,) * 3,) * 3, 5),
        Link("base_pitch", 3, "revolute", (0, 1, 0), (0, 0, 0), 0.0, (0, 0, 0),
             ((0,) * 3,) * 3, 4),
        Link("torso", 4, "revolute", (1, 0, 0), (0, 0, 0), torso_mass, (0, 0, 0),
             ((tix, 0, 0), (0, tiy, 0), (0, 0, tiz)), 3),
    ]
    feet = {}
    hip_i = ((2e-3, 0, 0), (0, 2e-3, 0), (0, 0, 2e-3))
    half_l, half_w = 0.5 * torso_length, 0.5 * torso_width
    hips = {
        ContactId.FL: (half_l, half_w), ContactId.FR: (half_l, -half_w),
        ContactId.RL: (-half_l, half_w), ContactId.RR: (-half_l, -half_w),
    }
    for i, leg in enumerate(LEG_ORDER):
        hx, hy = hips[leg]
        gi = 6 + 3 * i
        base = len(links)
        links.append(Link(f"{leg.name}_hip", 5, "revolute", (1, 0, 0), (hx, hy, 0),
                          link_mass, (0, 0, 0), hip_i, gi, actuated=True))
        links.append(Link(f"{leg.name}_upper", base, "revolute", (0, 1, 0), (0, 0, 0),
                          link_mass, (0, 0, -upper_length / 2), rod(upper_length),
                          gi + 1, actuated=True))
        links.append(Link(f"{leg.name}_lower", base + 1, "revolute", (0, 1, 0),
                          (0, 0, -upper_length), link_mass, (0, 0, -lower_length / 2),
                          rod(lower_length), gi + 2, actuated=True))
        feet[leg] = (base + 2, np.array([0.0, 0.0, -lower_length]))
    return RobotModel(links=tuple(links), feet=feet, torque_limit=torque_limit)


@dataclass
class FullState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(NV)
        self.qdot = np.asarray(self.qdot, dtype=float).reshape(NV)

    def copy(self) -> "FullState":
        return FullState(self.q.copy(), self.qdot.copy())

    @property
    def rpy(self) -> np.ndarray:
        return self.q[3:6]


def check_pitch_guard(q: np.ndarray):
    if abs(q[4]) > PITCH_GUARD:
        raise PitchGuardError(
            f"torso pitch {np.degrees(q[4]):.1f} deg exceeds the ±75 deg guard")


class Kinematics:
    """World-frame forward pass: poses, velocities, and zero-qddot accelerations."""

    def __init__(self, model: RobotModel, q, qdot=None, qddot=None):
        q = np.asarray(q, dtype=float).reshape(NV)
        check_pitch_guard(q)
        qdot = np.zeros(NV) if qdot is None else np.asarray(qdot, dtype=float).reshape(NV)
        qddot = np.zeros(NV) if qddot is None else np.asarray(qddot, dtype=float).reshape(NV)
        nb = model.num_links
        self.model = model
        self.q, self.qdot = q, qdot
        self.R = np.zeros((nb, 3, 3))
        self.p = np.zeros((nb, 3))       # joint origin (body frame origin)
        self.axis_w = np.zeros((nb, 3))  # joint axis in world frame
        self.w = np.zeros((nb, 3))       # angular velocity
        self.v = np.zeros((nb, 3))       # origin (material point) velocity
        self.alpha = np.zeros((nb, 3))
        self.a = np.zeros((nb, 3))       # origin acceleration
        self.com_w = np.zeros((nb, 3))
        self.vcom = np.zeros((nb, 3))
        self.acom = np.zeros((nb, 3))

        for i, ln in enumerate(model.links):
            if ln.parent < 0:
                Rp, pp = np.eye(3), np.zeros(3)
                wp = vp = alp = ap = np.zeros(3)
            else:
                j = ln.parent
                Rp, pp = self.R[j], self.p[j]
                wp, vp, alp, ap = self.w[j], self.v[j], self.alpha[j], self.a[j]
            qi, qdi, qddi = q[ln.gen_index], qdot[ln.gen_index], qddot[ln.gen_index]
            ax = np.asarray(ln.axis, dtype=float)
            off = np.asarray(ln.offset, dtype=float)
            s = Rp @ ax
            if ln.joint_type == "prismatic":
                r = Rp @ (off + ax * qi)
                self.R[i] = Rp
                self.p[i] = pp + r
                self.w[i] = wp
                self.v[i] = vp + _cross(wp, r) + s * qdi
                self.alpha[i] = alp
                self.a[i] = (ap + _cross(alp, r) + _cross(wp, _cross(wp, r))
                             + 2.0 * _cross(wp, s * qdi) + s * qddi)
            else:
                r = Rp @ off
                self.R[i] = Rp @ _rot_axis(ax, qi)
                self.p[i] = pp + r
                self.w[i] = wp + s * qdi
                self.v[i] = vp + _cross(wp, r)
                self.alpha[i] = alp + _cross(wp, s) * qdi + s * qddi
                self.a[i] = ap + _cross(alp, r) + _cross(wp, _cross(wp, r))
            self.axis_w[i] = s
            rc = self.R[i] @ np.asarray(ln.com, dtype=float)
            self.com_w[i] = self.p[i] + rc
            self.vcom[i] = self.v[i] + _cross(self.w[i], rc)
            self.acom[i] = (self.a[i] + _cross(self.alpha[i], rc)
                            + _cross(self.w[i], _cross(self.w[i], rc)))

    def point_position(self, body: int, local) -> np.ndarray:
        return self.p[body] + self.R[body] @ np.asarray(local, dtype=float)

    def point_velocity(self, body: int, local) -> np.ndarray:
        r = self.R[body] @ np.asarray(local, dtype=float)
        return self.v[body] + _cross(self.w[body], r)

    def point_acceleration(self, body: int, local) -> np.ndarray:
        """Acceleration under the qddot passed at construction (zero by default,
        which makes this the Jacobian-rate drift term Jdot qdot)."""
        r = self.R[body] @ np.asarray(local, dtype=float)
        return (self.a[body] + _cross(self.alpha[body], r)
                + _cross(self.w[body], _cross(self.w[body], r)))

    def point_jacobian(self, body: int, local) -> np.ndarray:
        x = self.point_position(body, local)
        J = np.zeros((3, NV))
        for j in self.model._ancestors[body]:
            ln = self.model.links[j]
            if ln.joint_type == "prismatic":
                J[:, ln.gen_index] = self.axis_w[j]
            else:
                J[:, ln.gen_index] = _cross(self.axis_w[j], x - self.p[j])
        return J

    def com(self) -> np.ndarray:
        m = np.array([ln.mass for ln in self.model.links])
        return (m[:, None] * self.com_w).sum(axis=0) / m.sum()

    def com_velocity(self) -> np.ndarray:
        m = np.array([ln.mass for ln in self.model.links])
        return (m[:, None] * self.vcom).sum(axis=0) / m.sum()

    def com_acceleration(self) -> np.ndarray:
        m = np.array([ln.mass for ln in self.model.links])
        return (m[:, None] * self.acom).sum(axis=0) / m.sum()

    def com_jacobian(self) -> np.ndarray:
        J = np.zeros((3, NV))
        total = self.model.total_mass
        for i, ln in enumerate(self.model.links):
            if ln.mass > 0.0:
                J += (ln.mass / total) * self.point_jacobian(i, ln.com)
        return J

    def foot_position(self, leg: ContactId) -> np.ndarray:
        body, local = self.model.feet[leg]
        return self.point_position(body, local)

    def foot_velocity(self, leg: ContactId) -> np.ndarray:
        body, local = self.model.feet[leg]
        return self.point_velocity(body, local)

    def foot_jacobian(self, leg: ContactId) -> np.ndarray:
        body, local = self.model.feet[leg]
        return self.point_jacobian(body, local)

    def foot_drift(self, leg: ContactId) -> np.ndarray:
        body, local = self.model.feet[leg]
        return self.point_acceleration(body, local)


def mass_matrix(model: RobotModel, q, kin: Kinematics | None = None) -> np.ndarray:
    """Joint-space inertia by composite-rigid-body assembly in world frame."""
    if kin is None:
        kin = Kinematics(model, q)
    nb = model.num_links
    # spatial inertia of each body about the world origin, motion = (omega, v_origin)
    Isp = np.zeros((nb, 6, 6))
    for i, ln in enumerate(model.links):
        if ln.mass == 0.0:
            continue
        m = ln.mass
        c = kin.com_w[i]
        C = _skew(c)
        Iw = kin.R[i] @ np.asarray(ln.inertia, dtype=float) @ kin.R[i].T
        Isp[i, :3, :3] = Iw - m * (C @ C)
        Isp[i, :3, 3:] = m * C
        Isp[i, 3:, :3] = -m * C
        Isp[i, 3:, 3:] = m * np.eye(3)
    # composite: fold children into parents (children have larger chain index)
    for i in range(nb - 1, -1, -1):
        par = model.links[i].parent
        if par >= 0:
            Isp[par] += Isp[i]
    axes = np.zeros((nb, 6))
    for i, ln in enumerate(model.links):
        s = kin.axis_w[i]
        if ln.joint_type == "prismatic":
            axes[i, 3:] = s
        else:
            axes[i, :3] = s
            axes[i, 3:] = _cross(kin.p[i], s)
    D = np.zeros((NV, NV))
    for i, ln in enumerate(model.links):
        F = Isp[i] @ axes[i]
        gi = ln.gen_index
        D[gi, gi] += F @ axes[i]
        j = ln.parent
        while j >= 0:
            gj = model.links[j].gen_index
            val = F @ axes[j]
            D[gi, gj] += val
            D[gj, gi] += val
            j = model.links[j].parent
    return D


def inverse_dynamics(model: RobotModel, q, qdot, qddot, gravity: bool = True,
                     kin: Kinematics | None = None) -> np.ndarray:
    """Generalized forces D qddot + H(q, qdot) by recursive Newton-Euler.

    A passed-in `kin` must have been built with the same q, qdot, qddot.
    """
    if kin is None:
        kin = Kinematics(model, q, qdot, qddot)
    nb = model.num_links
    g_vec = np.array([0.0, 0.0, -model.gravity]) if gravity else np.zeros(3)
    f_sub = np.zeros((nb, 3))
    n_sub = np.zeros((nb, 3))  # moments about the world origin
    for i, ln in enumerate(model.links):
        if ln.mass == 0.0:
            continue
        Iw = kin.R[i] @ np.asarray(ln.inertia, dtype=float) @ kin.R[i].T
        F = ln.mass * (kin.acom[i] - g_vec)
        N = Iw @ kin.alpha[i] + _cross(kin.w[i], Iw @ kin.w[i])
        f_sub[i] += F
        n_sub[i] += N + _cross(kin.com_w[i], F)
    for i in range(nb - 1, -1, -1):
        par = model.links[i].parent
        if par >= 0:
            f_sub[par] += f_sub[i]
            n_sub[par] += n_sub[i]
    tau = np.zeros(NV)
    for i, ln in enumerate(model.links):
        s = kin.axis_w[i]
        if ln.joint_type == "prismatic":
            tau[ln.gen_index] = s @ f_sub[i]
        else:
            tau[ln.gen_index] = s @ (n_sub[i] - _cross(kin.p[i], f_sub[i]))
    return tau


def bias_forces(model: RobotModel, q, qdot, kin: Kinematics | None = None) -> np.ndarray:
    """Coriolis, centrifugal, and gravity terms H(q, qdot)."""
    return inverse_dynamics(model, q, qdot, np.zeros(NV), kin=kin)


def kinetic_energy(model: RobotModel, q, qdot) -> float:
    qdot = np.asarray(qdot, dtype=float).reshape(NV)
    return float(0.5 * qdot @ mass_matrix(model, q) @ qdot)


def potential_energy(model: RobotModel, q) -> float:
    kin = Kinematics(model, q)
    return float(sum(ln.mass * model.gravity * kin.com_w[i][2]
                     for i, ln in enumerate(model.links)))


def total_energy(model: RobotModel, q, qdot) -> float:
    return kinetic_energy(model, q, qdot) + potential_energy(model, q)


@dataclass
class ContactForces:
    """World-frame ground reaction forces at the listed feet."""

    feet: tuple[ContactId, ...]
    forces: np.ndarray  # n_c x 3

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=float).reshape(len(self.feet), 3)

    def by_foot(self) -> dict:
        return {leg: self.forces[i].copy() for i, leg in enumerate(self.feet)}

    def pyramid_violation(self, friction_coeff: float) -> float:
        """Worst violation of {Fz >= 0, |Fx|,|Fy| <= mu/sqrt(2) Fz}; <= 0 means inside."""
        if not self.feet:
            return 0.0
        lim = friction_coeff / np.sqrt(2.0)
        F = self.forces
        worst = float((-F[:, 2]).max())
        for axis in (0, 1):
            worst = max(worst, float((np.abs(F[:, axis]) - lim * F[:, 2]).max()))
        return worst


def _contact_stack(model: RobotModel, kin: Kinematics, feet) -> tuple[np.ndarray, np.ndarray]:
    feet = tuple(sorted(feet))
    J = np.zeros((3 * len(feet), NV))
    drift = np.zeros(3 * len(feet))
    for i, leg in enumerate(feet):
        J[3 * i:3 * i + 3] = kin.foot_jacobian(leg)
        drift[3 * i:3 * i + 3] = kin.foot_drift(leg)
    return J, drift


def constrained_forward_dynamics(model: RobotModel, state: FullState, torques,
                                 feet, height_tol: float = 0.05,
                                 kin: Kinematics | None = None
                                 ) -> tuple[np.ndarray, ContactForces]:
    """Accelerations and reaction forces with the given feet pinned.

    Solves the index-1 KKT system [D -J'; J 0] [qddot; F] = [U tau - H; -drift];
    a rank-deficient contact stack falls back to a Tikhonov-regularized solve
    with a warning.
    """
    feet = tuple(sorted(feet))
    torques = np.asarray(torques, dtype=float).reshape(NU)
    if kin is None:
        kin = Kinematics(model, state.q, state.qdot)
    for leg in feet:
        z = kin.foot_position(leg)[2]
        if abs(z) > height_tol:
            warnings.warn(f"pinned foot {leg.name} is {z:+.3f} m off the ground plane")
    D = mass_matrix(model, state.q, kin)
    H = bias_forces(model, state.q, state.qdot, kin)
    J, drift = _contact_stack(model, kin, feet)
    nc3 = J.shape[0]
    rhs_top = model.actuation_matrix() @ torques - H
    K = np.zeros((NV + nc3, NV + nc3))
    K[:NV, :NV] = D
    if nc3:
        K[:NV, NV:] = -J.T
        K[NV:, :NV] = J
    rhs = np.concatenate([rhs_top, -drift])
    try:
        sol = np.linalg.solve(K, rhs)
        residual = float(np.abs(K @ sol - rhs).max())
        if not np.all(np.isfinite(sol)) or residual > 1e-6:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        warnings.warn("contact stack is rank deficient; using a regularized solve")
        K[NV:, NV:] = -1e-10 * np.eye(nc3)
        sol = np.linalg.solve(K, rhs)
    qddot = sol[:NV]
    F = sol[NV:].reshape(-1, 3)
    return qddot, ContactForces(feet, F)


def impact_map(model: RobotModel, state: FullState, feet) -> FullState:
    """Plastic impact: project velocities onto the new contact constraint.

    qdot+ = qdot- - Dinv J' (J Dinv J')^-1 J qdot-; positions are unchanged.
    """
    feet = tuple(sorted(feet))
    if not feet:
        return state.copy()
    kin = Kinematics(model, state.q, state.qdot)
    D = mass_matrix(model, state.q, kin)
    J, _ = _contact_stack(model, kin, feet)
    DinvJt = np.linalg.solve(D, J.T)
    M = J @ DinvJt
    jqd = J @ state.qdot
    try:
        lam = np.linalg.solve(M, jqd)
    except np.linalg.LinAlgError:
        warnings.warn("impact contact stack is rank deficient; regularized solve")
        lam = np.linalg.solve(M + 1e-10 * np.eye(M.shape[0]), jqd)
    return FullState(state.q.copy(), state.qdot - DinvJt @ lam)


@dataclass
class CompliantGround:
    """Spring-damper normal force plus a bristle friction state per foot.

    The bristle deflection obeys  sdot = v_t - sigma0 |v_t| s / (mu Fz)  so a
    steady slide settles at tangential force magnitude mu Fz.
    """

    stiffness: float = 3.0e4
    damping: float = 500.0
    sigma0: float = 1.0e4
    sigma1: float = 100.0
    friction_coeff: float = 0.4
    bristle: dict = field(default_factory=dict)

    def reset(self):
        self.bristle.clear()


def compliant_contact_forces(model: RobotModel, state: FullState,
                             ground: CompliantGround, dt: float | None = None,
                             kin: Kinematics | None = None) -> ContactForces:
    """Forces at every penetrating foot; feet above the plane produce none.

    Passing dt advances the bristle states (semi-implicit); without dt this
    is a pure query at the current bristle deflection.
    """
    if kin is None:
        kin = Kinematics(model, state.q, state.qdot)
    feet, forces = [], []
    for leg in ALL_FEET:
        pos = kin.foot_position(leg)
        vel = kin.foot_velocity(leg)
        pen = -pos[2]
        if pen <= 0.0:
            ground.bristle.pop(leg, None)
            continue
        fz = ground.stiffness * pen - ground.damping * vel[2]
        fz = max(fz, 0.0)
        s = ground.bristle.get(leg, np.zeros(2))
        vt = vel[:2]
        speed = float(np.linalg.norm(vt))
        if fz <= 0.0:
            ft = np.zeros(2)
            s_new = s
        else:
            level = ground.friction_coeff * fz
            if dt is not None:
                s_new = (s + dt * vt) / (1.0 + dt * ground.sigma0 * speed / level)
                sdot = (s_new - s) / dt
            else:
                s_new = s
                sdot = vt - ground.sigma0 * speed / level * s
            ft = -(ground.sigma0 * s_new + ground.sigma1 * sdot)
        if dt is not None:
            ground.bristle[leg] = s_new
        feet.append(leg)
        forces.append([ft[0], ft[1], fz])
    if not feet:
        return ContactForces(tuple(), np.zeros((0, 3)))
    return ContactForces(tuple(feet), np.asarray(forces))


@dataclass(frozen=True)
class RigidContact:
    """Schedule-driven contact: the listed feet are pinned."""

    feet: tuple[ContactId, ...]


def _compliant_generalized(model: RobotModel, kin: Kinematics, fc: ContactForces) -> np.ndarray:
    gen = np.zeros(NV)
    for leg, F in zip(fc.feet, fc.forces):
        gen += kin.foot_jacobian(leg).T @ F
    return gen


def integrate_step(model: RobotModel, state: FullState, torques, contact,
                   dt: float) -> tuple[FullState, ContactForces]:
    """Advance one step with held torques (explicit midpoint rule).

    `contact` is a RigidContact (feet pinned via the KKT dynamics) or a
    CompliantGround (forces evaluated once per step and held, with the
    bristle states advanced semi-implicitly).  Deterministic.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    torques = np.asarray(torques, dtype=float).reshape(NU)

    if isinstance(contact, RigidContact):
        def accel(st: FullState):
            return constrained_forward_dynamics(model, st, torques, contact.feet)

        qdd1, forces = accel(state)
        mid = FullState(state.q + 0.5 * dt * state.qdot,
                        state.qdot + 0.5 * dt * qdd1)
        qdd2, _ = accel(mid)
        new = FullState(state.q + dt * mid.qdot, state.qdot + dt * qdd2)
        return new, forces
    if isinstance(contact, CompliantGround):
        kin = Kinematics(model, state.q, state.qdot)
        forces = compliant_contact_forces(model, state, contact, dt, kin)
        gen_ext = _compliant_generalized(model, kin, forces)
        U = model.actuation_matrix()

        def accel(st: FullState, k: Kinematics | None = None):
            k = Kinematics(model, st.q, st.qdot) if k is None else k
            D = mass_matrix(model, st.q, k)
            H = bias_forces(model, st.q, st.qdot, k)
            return np.linalg.solve(D, U @ torques + gen_ext - H)

        qdd1 = accel(state, kin)
        mid = FullState(state.q + 0.5 * dt * state.qdot,
                        state.qdot + 0.5 * dt * qdd1)
        qdd2 = accel(mid)
        new = FullState(state.q + dt * mid.qdot, state.qdot + dt * qdd2)
        return new, forces
    raise TypeError("contact must be RigidContact or CompliantGround")


def leg_inverse_kinematics(model: RobotModel, leg: ContactId, hip_world: np.ndarray,
                           foot_world: np.ndarray) -> np.ndarray:
    """Closed-form (abduction, hip pitch, knee pitch) for a level torso.

    Assumes the default leg geometry: abduction about x at the hip, two pitch
    links below.  Picks the knee-forward branch.
    """
    by_name = {ln.name: ln for ln in model.links}
    upper = -by_name[f"{leg.name}_lower"].offset[2]
    body, local = model.feet[leg]
    lower = -local[2]
    v = np.asarray(foot_world, dtype=float) - np.asarray(hip_world, dtype=float)
    theta_a = np.arctan2(v[1], -v[2])
    ca, sa = np.cos(theta_a), np.sin(theta_a)
    vx = v[0]
    vz = sa * v[1] + ca * v[2]  # (Rx(-theta_a) v)_z
    r2 = vx * vx + vz * vz
    reach = upper + lower
    if r2 > reach * reach:
        raise ValueError(f"{leg.name} foot target out of reach ({np.sqrt(r2):.3f} m)")
    ck = (r2 - upper ** 2 - lower ** 2) / (2.0 * upper * lower)
    ck = np.clip(ck, -1.0, 1.0)
    knee = np.arccos(ck)
    psi = np.arctan2(-vx, -vz)
    hip = psi - np.arctan2(lower * np.sin(knee), upper + lower * np.cos(knee))
    return np.array([theta_a, hip, knee])


def initial_stance_state(model: RobotModel, footholds: dict, com_target,
                         iterations: int = 12) -> FullState:
    """Standing state: level torso, feet at the given ground points, COM on target.

    `footholds` maps each leg to its ground (x, y); `com_target` is the desired
    COM position (x, y, z).  The torso position is adjusted by fixed-point
    iteration so the whole-body COM lands on the target.
    """
    com_target = np.asarray(com_target, dtype=float).reshape(3)
    by_name = {ln.name: ln for ln in model.links}
    hips = {leg: np.asarray(by_name[f"{leg.name}_hip"].offset, dtype=float)
            for leg in ALL_FEET}
    torso = com_target.copy()
    torso[2] += 0.05
    q = np.zeros(NV)
    for _ in range(iterations):
        q[:3] = torso
        q[3:6] = 0.0
        for i, leg in enumerate(LEG_ORDER):
            hip_world = torso + hips[leg]
            foot = np.array([footholds[leg][0], footholds[leg][1], 0.0])
            q[6 + 3 * i:9 + 3 * i] = leg_inverse_kinematics(model, leg, hip_world, foot)
        kin = Kinematics(model, q)
        err = com_target - kin.com()
        if np.linalg.norm(err) < 1e-12:
            break
        torso = torso + err
    return FullState(q, np.zeros(NV))
