"""Linear inverted pendulum template for the horizontal center of mass.

State convention x = (r_x, rdot_x, r_y, rdot_y); input u = (u_x, u_y) is the
center of pressure on the ground plane.  The COM height is constant, so the
continuous dynamics decouple per axis:

    rddot = (g / r_z) (r - u)

Exact zero-order-hold discretization is available in closed form through
cosh/sinh of omega*T with omega = sqrt(g / r_z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATE_DIM = 4
INPUT_DIM = 2


@dataclass(frozen=True)
class LipParams:
    """Physical constants of the template model (SI units)."""

    com_height: float = 0.5
    gravity: float = 9.81
    total_mass: float = 32.0
    friction_coeff: float = 0.4
    sample_time: float = 0.08

    def __post_init__(self):
        for name in ("com_height", "gravity", "total_mass", "friction_coeff", "sample_time"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def omega(self) -> float:
        """Natural frequency sqrt(g / r_z) of the unstable pendulum mode."""
        return float(np.sqrt(self.gravity / self.com_height))


@dataclass(frozen=True)
class LipDiscrete:
    """Zero-order-hold discretization x+ = A x + B u."""

    A: np.ndarray
    B: np.ndarray
    sample_time: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.shape != (STATE_DIM, STATE_DIM) or B.shape != (STATE_DIM, INPUT_DIM):
            raise ValueError("discrete model must be 4x4 / 4x2")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)


def discretize_zoh(params: LipParams, sample_time: float | None = None) -> LipDiscrete:
    """Exact ZOH discretization; per-axis blocks built from cosh/sinh."""
    T = params.sample_time if sample_time is None else float(sample_time)
    if not T > 0.0:
        raise ValueError("sample_time must be positive")
    w = params.omega
    ch = np.cosh(w * T)
    sh = np.sinh(w * T)
    a = np.array([[ch, sh / w], [w * sh, ch]])
    b = np.array([1.0 - ch, -w * sh])
    A = np.zeros((STATE_DIM, STATE_DIM))
    B = np.zeros((STATE_DIM, INPUT_DIM))
    A[:2, :2] = a
    A[2:, 2:] = a
    B[:2, 0] = b
    B[2:, 1] = b
    return LipDiscrete(A, B, T)


def lip_step(disc: LipDiscrete, x, u) -> np.ndarray:
    """One discrete step under a held COP input."""
    x = np.asarray(x, dtype=float).reshape(STATE_DIM)
    u = np.asarray(u, dtype=float).reshape(INPUT_DIM)
    return disc.A @ x + disc.B @ u


def equilibrium_state(position) -> np.ndarray:
    """Rest state with the COM over `position` (COP directly underneath)."""
    p = np.asarray(position, dtype=float).reshape(INPUT_DIM)
    return np.array([p[0], 0.0, p[1], 0.0])


def net_force(params: LipParams, x, u) -> np.ndarray:
    """Net ground reaction force implied by the template dynamics.

    The vertical component is exactly m*g; the tangential components follow
    the pendulum acceleration m * (g/r_z) (r - u).
    """
    x = np.asarray(x, dtype=float).reshape(STATE_DIM)
    u = np.asarray(u, dtype=float).reshape(INPUT_DIM)
    mg = params.total_mass * params.gravity
    return np.array([
        mg * (x[0] - u[0]) / params.com_height,
        mg * (x[2] - u[1]) / params.com_height,
        mg,
    ])


def in_friction_pyramid(params: LipParams, force, tol: float = 0.0) -> bool:
    """Membership in the inner pyramid {Fz > 0, |Fx| <= mu/sqrt(2) Fz, |Fy| <= ...}."""
    F = np.asarray(force, dtype=float).reshape(3)
    lim = params.friction_coeff / np.sqrt(2.0)
    if F[2] <= 0.0:
        return False
    return bool(abs(F[0]) <= lim * F[2] + tol and abs(F[1]) <= lim * F[2] + tol)


def cone_halfspaces(params: LipParams):
    """Linear inequality Phi x + Psi u <= eta equivalent to pyramid membership.

    Dividing the tangential pyramid faces by the (constant, positive) vertical
    force leaves |r - u| <= mu * r_z / sqrt(2) per axis; Fz = m g > 0 holds
    identically and carries no row.
    """
    lim = params.friction_coeff * params.com_height / np.sqrt(2.0)
    Phi = np.array([
        [1.0, 0.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, -1.0, 0.0],
    ])
    Psi = np.array([
        [-1.0, 0.0],
        [1.0, 0.0],
        [0.0, -1.0],
        [0.0, 1.0],
    ])
    eta = np.full(4, lim)
    return Phi, Psi, eta
