"""Event-based model-predictive steering of the pendulum template.

The finite-horizon tracking QP is assembled and solved only when the contact
domain changes (every grid_count samples), and the first grid_count COP
inputs of the plan are applied open loop until the next event.  Decision
variables are the predicted states, the COP inputs, and the simplex weights
that pin each COP inside its domain's support polygon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lip
from .gait import GaitGraph, barycentric_weights, cop_parametrization, domain_indicator
from .qp import QpProblem, QpSolution, QpStatus, solve_qp


def _weight_matrix(w, dim: int, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        if w <= 0:
            raise ValueError(f"{name} must be positive")
        return float(w) * np.eye(dim)
    if w.shape != (dim, dim):
        raise ValueError(f"{name} must be scalar or {dim}x{dim}")
    if np.abs(w - w.T).max() > 1e-12 * (1 + np.abs(w).max()):
        raise ValueError(f"{name} must be symmetric")
    return w


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, cost weights, and steering target for the event-based QP."""

    horizon: int = 8
    state_weight: float | np.ndarray = 1.0       # Q, per-stage state tracking
    terminal_weight: float | np.ndarray = 1000.0  # P, end-of-horizon anchor
    cop_weight: float | np.ndarray = 1.0          # R, COP effort
    lambda_weight: float = 0.01                   # weight pulling toward nominal simplex weights
    target_state: tuple | np.ndarray = (0.0, 0.0, 0.0, 0.0)
    rendezvous_sample: int | None = None          # sample at which the reference reaches the target

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.lambda_weight <= 0:
            raise ValueError("lambda_weight must be positive")
        object.__setattr__(self, "target_state",
                           np.asarray(self.target_state, dtype=float).reshape(lip.STATE_DIM))

    def Q(self) -> np.ndarray:
        return _weight_matrix(self.state_weight, lip.STATE_DIM, "state_weight")

    def P(self) -> np.ndarray:
        return _weight_matrix(self.terminal_weight, lip.STATE_DIM, "terminal_weight")

    def R(self) -> np.ndarray:
        return _weight_matrix(self.cop_weight, lip.INPUT_DIM, "cop_weight")


class MpcInfeasibleError(RuntimeError):
    """Raised when the event QP cannot be solved to optimality."""

    def __init__(self, sample: int, zeta: int, qp_solution: QpSolution):
        self.sample = sample
        self.zeta = zeta
        self.qp_solution = qp_solution
        super().__init__(
            f"event QP at sample {sample} (domain {zeta}) finished {qp_solution.status.value} "
            f"(worst KKT residual {qp_solution.kkt.worst():.3e})")


def rendezvous_sample(config: MpcConfig, graph: GaitGraph) -> int:
    if config.rendezvous_sample is not None:
        return int(config.rendezvous_sample)
    return graph.num_domains * graph.grid_count


def zeta_sequence(graph: GaitGraph, k: int, count: int) -> list[int]:
    return [domain_indicator(k + i, graph.num_domains, graph.grid_count) for i in range(count)]


def reference_trajectory(config: MpcConfig, graph: GaitGraph, params: lip.LipParams,
                         x_now, k: int) -> np.ndarray:
    """Reference states d_0..d_N: current state, then a straight position ramp.

    Positions interpolate linearly from the current position to the target
    over the samples remaining until the rendezvous; velocities carry the
    ramp slope.  At and beyond the rendezvous the reference is the target.
    """
    x_now = np.asarray(x_now, dtype=float).reshape(lip.STATE_DIM)
    x_f = config.target_state
    N = config.horizon
    T_f = rendezvous_sample(config, graph)
    d = np.tile(x_f, (N + 1, 1))
    d[0] = x_now
    remaining = T_f - k
    if remaining > 0:
        p_now = x_now[[0, 2]]
        p_f = x_f[[0, 2]]
        slope = (p_f - p_now) / (remaining * params.sample_time)
        for i in range(1, N + 1):
            if k + i >= T_f:
                break
            frac = i / remaining
            pos = p_now + (p_f - p_now) * frac
            d[i] = [pos[0], slope[0], pos[1], slope[1]]
    return d


def nominal_weights(graph: GaitGraph, reference: np.ndarray, k: int) -> list[np.ndarray]:
    """Per-stage simplex weights whose COP best matches the reference position.

    When the reference is at the steering target and the support polygon
    contains it, the implied COP sits exactly under the target, which makes
    the target a genuine zero-cost fixed point of the event QP.
    """
    N = reference.shape[0] - 1
    out = []
    for i in range(N):
        dom = graph.domain(domain_indicator(k + i, graph.num_domains, graph.grid_count))
        C, _ = cop_parametrization(dom)
        out.append(barycentric_weights(C, reference[i][[0, 2]]))
    return out


@dataclass
class MpcLayout:
    """Variable offsets and per-stage data for one assembled event QP."""

    sample: int
    zetas: list[int]
    contact_matrices: list[np.ndarray]
    reference: np.ndarray
    lambda_des: list[np.ndarray]
    x_now: np.ndarray
    num_states: int
    lam_offsets: list[int]

    def x_slice(self, i: int) -> slice:
        # decision states are x_{k+1|k}..x_{k+N|k}
        return slice((i - 1) * lip.STATE_DIM, i * lip.STATE_DIM)

    def u_slice(self, i: int) -> slice:
        base = self.num_states * lip.STATE_DIM
        return slice(base + i * lip.INPUT_DIM, base + (i + 1) * lip.INPUT_DIM)

    def lam_slice(self, i: int) -> slice:
        n_c = self.contact_matrices[i].shape[1]
        return slice(self.lam_offsets[i], self.lam_offsets[i] + n_c)


def build_mpc_qp(config: MpcConfig, graph: GaitGraph, params: lip.LipParams,
                 x_now, k: int, disc: lip.LipDiscrete | None = None
                 ) -> tuple[QpProblem, MpcLayout]:
    """Assemble the event QP at sample k from state x_now.

    Decision vector: [x_1..x_N | u_0..u_{N-1} | lam_0..lam_{N-1}] with the
    template recursion, the COP-weight coupling u_i = C lam_i, and the weight
    sums as equalities; friction rows and the [0, 1] weight box as inequalities.
    """
    if disc is None:
        disc = lip.discretize_zoh(params)
    if k % graph.grid_count != 0:
        raise ValueError(f"events occur at multiples of grid_count, got sample {k}")
    x_now = np.asarray(x_now, dtype=float).reshape(lip.STATE_DIM)
    N = config.horizon
    nx, nu = lip.STATE_DIM, lip.INPUT_DIM

    zetas = zeta_sequence(graph, k, N)
    Cs = [cop_parametrization(graph.domain(z))[0] for z in zetas]
    ncs = [C.shape[1] for C in Cs]
    d = reference_trajectory(config, graph, params, x_now, k)
    lam_des = nominal_weights(graph, d, k)

    n_states = N * nx
    n_inputs = N * nu
    lam_offsets = []
    off = n_states + n_inputs
    for nc in ncs:
        lam_offsets.append(off)
        off += nc
    n = off
    layout = MpcLayout(k, zetas, Cs, d, lam_des, x_now, N, lam_offsets)

    Q, P, R = config.Q(), config.P(), config.R()
    H = np.zeros((n, n))
    g = np.zeros(n)
    for i in range(1, N):
        sl = layout.x_slice(i)
        H[sl, sl] = 2.0 * Q
        g[sl.start:sl.stop] = -2.0 * (Q @ d[i])
    sl = layout.x_slice(N)
    H[sl, sl] = 2.0 * P
    g[sl.start:sl.stop] = -2.0 * (P @ d[N])
    for i in range(N):
        sl = layout.u_slice(i)
        H[sl, sl] = 2.0 * R
        sl = layout.lam_slice(i)
        H[sl, sl] = 2.0 * config.lambda_weight * np.eye(ncs[i])
        g[sl.start:sl.stop] = -2.0 * config.lambda_weight * lam_des[i]

    m_eq = N * nx + N * nu + N
    A = np.zeros((m_eq, n))
    b = np.zeros(m_eq)
    row = 0
    for i in range(1, N + 1):  # recursion x_i = A x_{i-1} + B u_{i-1}
        rows = slice(row, row + nx)
        A[rows, layout.x_slice(i)] = np.eye(nx)
        if i == 1:
            b[rows] = disc.A @ x_now
        else:
            A[rows, layout.x_slice(i - 1)] = -disc.A
        A[rows, layout.u_slice(i - 1)] = -disc.B
        row += nx
    for i in range(N):  # COP pinned to the support polygon: u_i = C lam_i
        rows = slice(row, row + nu)
        A[rows, layout.u_slice(i)] = np.eye(nu)
        A[rows, layout.lam_slice(i)] = -Cs[i]
        row += nu
    for i in range(N):  # weights sum to one
        A[row, layout.lam_slice(i)] = 1.0
        b[row] = 1.0
        row += 1

    Phi, Psi, eta = lip.cone_halfspaces(params)
    m_ineq = 4 * N
    G = np.zeros((m_ineq, n))
    hvec = np.zeros(m_ineq)
    for i in range(N):
        rows = slice(4 * i, 4 * i + 4)
        G[rows, layout.u_slice(i)] = Psi
        if i == 0:
            hvec[rows] = eta - Phi @ x_now
        else:
            G[rows, layout.x_slice(i)] = Phi
            hvec[rows] = eta
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    for i in range(N):
        sl = layout.lam_slice(i)
        lower[sl.start:sl.stop] = 0.0
        upper[sl.start:sl.stop] = 1.0

    problem = QpProblem(hessian=H, linear_cost=g, eq_matrix=A, eq_vector=b,
                        ineq_matrix=G, ineq_vector=hvec, lower=lower, upper=upper)
    return problem, layout


@dataclass
class MpcSolution:
    """Unpacked optimum of one event QP."""

    sample: int
    zetas: list[int]
    predicted_states: np.ndarray      # (N+1) x 4, row 0 is the measured state
    cop_sequence: np.ndarray          # N x 2
    lambda_sequence: list[np.ndarray]
    reference: np.ndarray
    lambda_des: list[np.ndarray]
    objective: float
    iterations: int
    qp_solution: QpSolution = field(repr=False, default=None)


@dataclass(frozen=True)
class MpcLaw:
    """Open-loop segment of the plan applied until the next event."""

    sample: int
    controls: np.ndarray  # grid_count x 2

    def control(self, j: int) -> np.ndarray:
        return self.controls[j]


def _true_cost(config: MpcConfig, sol_states, cops, lams, layout: MpcLayout) -> float:
    Q, P, R = config.Q(), config.P(), config.R()
    d = layout.reference
    N = config.horizon
    J = 0.0
    for i in range(N):
        e = sol_states[i] - d[i]
        J += float(e @ Q @ e + cops[i] @ R @ cops[i])
        dl = lams[i] - layout.lambda_des[i]
        J += config.lambda_weight * float(dl @ dl)
    e = sol_states[N] - d[N]
    J += float(e @ P @ e)
    return J


def solve_event(config: MpcConfig, graph: GaitGraph, params: lip.LipParams,
                x_now, k: int, disc: lip.LipDiscrete | None = None,
                tol: float = 1e-9) -> tuple[MpcSolution, MpcLaw]:
    """Solve the event QP at sample k and extract the open-loop law."""
    if disc is None:
        disc = lip.discretize_zoh(params)
    problem, layout = build_mpc_qp(config, graph, params, x_now, k, disc)
    qp_sol = solve_qp(problem, tol=tol)
    if qp_sol.status is not QpStatus.OPTIMAL:
        raise MpcInfeasibleError(k, layout.zetas[0], qp_sol)

    N = config.horizon
    states = np.zeros((N + 1, lip.STATE_DIM))
    states[0] = layout.x_now
    for i in range(1, N + 1):
        states[i] = qp_sol.x_star[layout.x_slice(i)]
    cops = np.zeros((N, lip.INPUT_DIM))
    lams = []
    for i in range(N):
        cops[i] = qp_sol.x_star[layout.u_slice(i)]
        lams.append(qp_sol.x_star[layout.lam_slice(i)].copy())
    sol = MpcSolution(
        sample=k, zetas=layout.zetas, predicted_states=states, cop_sequence=cops,
        lambda_sequence=lams, reference=layout.reference, lambda_des=layout.lambda_des,
        objective=_true_cost(config, states, cops, lams, layout),
        iterations=qp_sol.iterations, qp_solution=qp_sol)
    law = MpcLaw(sample=k, controls=cops[:graph.grid_count].copy())
    return sol, law


def downsample_map(config: MpcConfig, graph: GaitGraph, params: lip.LipParams,
                   m: int, x, disc: lip.LipDiscrete | None = None) -> np.ndarray:
    """Event-to-event map: solve at event m, push the state grid_count samples."""
    if disc is None:
        disc = lip.discretize_zoh(params)
    Nd = graph.grid_count
    _, law = solve_event(config, graph, params, x, m * Nd, disc)
    x = np.asarray(x, dtype=float).reshape(lip.STATE_DIM)
    for j in range(Nd):
        x = lip.lip_step(disc, x, law.control(j))
    return x


@dataclass
class RolloutResult:
    """Closed-loop trajectory under the event-based law."""

    states: np.ndarray       # (K+1) x 4 sampled trajectory
    cops: np.ndarray         # K x 2 applied COP inputs
    zetas: np.ndarray        # K domain indicators
    solve_samples: np.ndarray
    solve_count: int
    objectives: np.ndarray   # per event
    target: np.ndarray

    @property
    def num_samples(self) -> int:
        return self.cops.shape[0]

    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.states - self.target, axis=1)

    def event_states(self, grid_count: int) -> np.ndarray:
        return self.states[::grid_count]

    def write_csv(self, path):
        """One row per sample: k, zeta, state, applied COP, solve flag."""
        with open(path, "w") as fh:
            fh.write("k,zeta,r_x,rdot_x,r_y,rdot_y,u_x,u_y,solve_flag\n")
            solve_set = set(int(s) for s in self.solve_samples)
            for k in range(self.num_samples):
                x = self.states[k]
                u = self.cops[k]
                flag = 1 if k in solve_set else 0
                fh.write(f"{k},{int(self.zetas[k])},{x[0]:.17g},{x[1]:.17g},"
                         f"{x[2]:.17g},{x[3]:.17g},{u[0]:.17g},{u[1]:.17g},{flag}\n")


def rollout_closed_loop(config: MpcConfig, graph: GaitGraph, params: lip.LipParams,
                        x0, total_events: int, disc: lip.LipDiscrete | None = None
                        ) -> RolloutResult:
    """Run the event-based loop: one QP per event, open loop in between."""
    if disc is None:
        disc = lip.discretize_zoh(params)
    if total_events < 1:
        raise ValueError("need at least one event")
    Nd = graph.grid_count
    if config.horizon < Nd:
        raise ValueError("horizon must cover at least one domain of samples")
    K = total_events * Nd
    states = np.zeros((K + 1, lip.STATE_DIM))
    cops = np.zeros((K, lip.INPUT_DIM))
    zetas = np.zeros(K, dtype=int)
    objectives = np.zeros(total_events)
    solve_samples = np.zeros(total_events, dtype=int)
    x = np.asarray(x0, dtype=float).reshape(lip.STATE_DIM)
    states[0] = x
    solves = 0
    for m in range(total_events):
        k = m * Nd
        sol, law = solve_event(config, graph, params, x, k, disc)
        solves += 1
        solve_samples[m] = k
        objectives[m] = sol.objective
        for j in range(Nd):
            u = law.control(j)
            cops[k + j] = u
            zetas[k + j] = domain_indicator(k + j, graph.num_domains, graph.grid_count)
            x = lip.lip_step(disc, x, u)
            states[k + j + 1] = x
    return RolloutResult(states, cops, zetas, solve_samples, solves, objectives,
                         config.target_state.copy())


@dataclass
class EventMpc:
    """Bundle of gait, template, and config with a cached discretization."""

    config: MpcConfig
    graph: GaitGraph
    params: lip.LipParams

    def __post_init__(self):
        self.disc = lip.discretize_zoh(self.params)

    def solve(self, x, k: int) -> tuple[MpcSolution, MpcLaw]:
        return solve_event(self.config, self.graph, self.params, x, k, self.disc)

    def downsample(self, m: int, x) -> np.ndarray:
        return downsample_map(self.config, self.graph, self.params, m, x, self.disc)

    def rollout(self, x0, total_events: int) -> RolloutResult:
        return rollout_closed_loop(self.config, self.graph, self.params, x0,
                                   total_events, self.disc)
