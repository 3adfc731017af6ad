"""Dense convex quadratic programming.

Solves

    minimize    0.5 x'Hx + g'x
    subject to  A x  = b
                G x <= h
                lb <= x <= ub

with a primal-dual interior-point method (Mehrotra predictor-corrector).
Box bounds are folded into the inequality block internally; duals are
reported separately per bound side.  A brute-force active-set enumerator
is included as an independent cross-check for small instances.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import nnls


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class KktResidual:
    """Infinity norms of the four first-order optimality residual groups."""

    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def worst(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


def _as_matrix(m, rows: int | None, cols: int, name: str) -> np.ndarray:
    if m is None:
        return np.zeros((0, cols))
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != cols:
        raise ValueError(f"{name} must be 2-d with {cols} columns, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {m.shape[0]}")
    return m


def _as_vector(v, n: int, name: str, default: float | None = None) -> np.ndarray:
    if v is None:
        if default is None:
            return np.zeros(n)
        return np.full(n, default)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != n:
        raise ValueError(f"{name} must have length {n}, got {v.shape[0]}")
    return v


@dataclass(frozen=True)
class QpProblem:
    """Immutable problem data.  Empty constraint blocks are zero-row arrays."""

    hessian: np.ndarray
    linear_cost: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_vector: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_vector: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        H = np.asarray(self.hessian, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] < 1:
            raise ValueError(f"hessian must be square and non-empty, got shape {H.shape}")
        n = H.shape[0]
        scale = 1.0 + float(np.abs(H).max())
        if float(np.abs(H - H.T).max()) > 1e-10 * scale:
            raise ValueError("hessian must be symmetric")
        g = _as_vector(self.linear_cost, n, "linear_cost")
        A = _as_matrix(self.eq_matrix, None, n, "eq_matrix")
        b = _as_vector(self.eq_vector, A.shape[0], "eq_vector")
        G = _as_matrix(self.ineq_matrix, None, n, "ineq_matrix")
        h = _as_vector(self.ineq_vector, G.shape[0], "ineq_vector")
        lb = _as_vector(self.lower, n, "lower", default=-np.inf)
        ub = _as_vector(self.upper, n, "upper", default=np.inf)
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        for name, arr in (("hessian", H), ("linear_cost", g), ("eq_matrix", A),
                          ("eq_vector", b), ("ineq_matrix", G), ("ineq_vector", h)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "linear_cost", g)
        object.__setattr__(self, "eq_matrix", A)
        object.__setattr__(self, "eq_vector", b)
        object.__setattr__(self, "ineq_matrix", G)
        object.__setattr__(self, "ineq_vector", h)
        object.__setattr__(self, "lower", lb)
        object.__setattr__(self, "upper", ub)

    @property
    def num_variables(self) -> int:
        return self.hessian.shape[0]

    @property
    def num_eq(self) -> int:
        return self.eq_matrix.shape[0]

    @property
    def num_ineq(self) -> int:
        return self.ineq_matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian)[0])

    def is_strictly_convex(self, threshold: float = 1e-12) -> bool:
        return self.min_eigenvalue() >= threshold

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(0.5 * x @ self.hessian @ x + self.linear_cost @ x)

    def to_dict(self) -> dict:
        def clean(v):
            a = np.where(np.isfinite(v), v, np.sign(v) * 1e308)
            return a.tolist()

        return {
            "num_variables": self.num_variables,
            "hessian": self.hessian.tolist(),
            "linear_cost": self.linear_cost.tolist(),
            "eq_matrix": self.eq_matrix.tolist(),
            "eq_vector": self.eq_vector.tolist(),
            "ineq_matrix": self.ineq_matrix.tolist(),
            "ineq_vector": self.ineq_vector.tolist(),
            "lower": clean(self.lower),
            "upper": clean(self.upper),
        }


@dataclass
class QpSolution:
    x_star: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    lower_duals: np.ndarray
    upper_duals: np.ndarray
    status: QpStatus
    iterations: int
    kkt: KktResidual
    objective: float = field(default=float("nan"))


def kkt_residual(problem: QpProblem, x, eq_duals=None, ineq_duals=None,
                 lower_duals=None, upper_duals=None) -> KktResidual:
    """First-order residuals of a candidate primal-dual point (infinity norms)."""
    n = problem.num_variables
    x = _as_vector(x, n, "x")
    y = _as_vector(eq_duals, problem.num_eq, "eq_duals")
    z = _as_vector(ineq_duals, problem.num_ineq, "ineq_duals")
    zl = _as_vector(lower_duals, n, "lower_duals")
    zu = _as_vector(upper_duals, n, "upper_duals")

    grad = problem.hessian @ x + problem.linear_cost
    if problem.num_eq:
        grad = grad + problem.eq_matrix.T @ y
    if problem.num_ineq:
        grad = grad + problem.ineq_matrix.T @ z
    grad = grad - zl + zu
    stationarity = float(np.abs(grad).max()) if n else 0.0

    primal = 0.0
    comp = 0.0
    if problem.num_eq:
        primal = max(primal, float(np.abs(problem.eq_matrix @ x - problem.eq_vector).max()))
    if problem.num_ineq:
        slack = problem.ineq_vector - problem.ineq_matrix @ x
        primal = max(primal, float(np.maximum(-slack, 0.0).max()))
        comp = max(comp, float(np.abs(z * slack).max()))
    finite_lb = np.isfinite(problem.lower)
    finite_ub = np.isfinite(problem.upper)
    if finite_lb.any():
        gap = (x - problem.lower)[finite_lb]
        primal = max(primal, float(np.maximum(-gap, 0.0).max()))
        comp = max(comp, float(np.abs(zl[finite_lb] * gap).max()))
    if finite_ub.any():
        gap = (problem.upper - x)[finite_ub]
        primal = max(primal, float(np.maximum(-gap, 0.0).max()))
        comp = max(comp, float(np.abs(zu[finite_ub] * gap).max()))

    dual = 0.0
    for v in (z, zl, zu):
        if v.size:
            dual = max(dual, float(np.maximum(-v, 0.0).max()))
    return KktResidual(stationarity, primal, dual, comp)


def _fold_bounds(problem: QpProblem):
    """Stack user inequalities and finite box bounds into one G x <= h block.

    Returns (G, h, lb_idx, ub_idx): variable indices of the folded lower /
    upper bound rows, in row order after the user block.
    """
    n = problem.num_variables
    blocks_g = [problem.ineq_matrix]
    blocks_h = [problem.ineq_vector]
    lb_idx = np.flatnonzero(np.isfinite(problem.lower))
    ub_idx = np.flatnonzero(np.isfinite(problem.upper))
    if lb_idx.size:
        E = np.zeros((lb_idx.size, n))
        E[np.arange(lb_idx.size), lb_idx] = -1.0
        blocks_g.append(E)
        blocks_h.append(-problem.lower[lb_idx])
    if ub_idx.size:
        E = np.zeros((ub_idx.size, n))
        E[np.arange(ub_idx.size), ub_idx] = 1.0
        blocks_g.append(E)
        blocks_h.append(problem.upper[ub_idx])
    G = np.vstack(blocks_g)
    h = np.concatenate(blocks_h)
    return G, h, lb_idx, ub_idx


def _unfold_duals(problem: QpProblem, z_all: np.ndarray, lb_idx, ub_idx):
    n = problem.num_variables
    mi = problem.num_ineq
    z = z_all[:mi].copy()
    zl = np.zeros(n)
    zu = np.zeros(n)
    zl[lb_idx] = z_all[mi:mi + lb_idx.size]
    zu[ub_idx] = z_all[mi + lb_idx.size:]
    return z, zl, zu


def _solve_reduced(K: np.ndarray, rhs: np.ndarray, n: int) -> np.ndarray:
    """Solve the symmetric quasi-definite reduced system, regularizing on failure."""
    reg = 0.0
    for _ in range(6):
        try:
            M = K
            if reg > 0.0:
                M = K.copy()
                M[:n, :n] += reg * np.eye(n)
                if K.shape[0] > n:
                    M[n:, n:] -= reg * np.eye(K.shape[0] - n)
            sol = np.linalg.solve(M, rhs)
            if np.all(np.isfinite(sol)):
                return sol
        except np.linalg.LinAlgError:
            pass
        reg = 1e-12 if reg == 0.0 else reg * 1e3
    raise np.linalg.LinAlgError("reduced KKT system is numerically singular")


class _KktSolver:
    """Once-per-iteration LU of the proximally regularized reduced system.

    The factorization is of M = K + diag(+delta I_n, -delta I_m); solves are
    refined against the *unregularized* K so the static shift does not bias
    the Newton direction.  delta escalates if refinement cannot recover.
    `scale` anchors delta to the problem data; by default the largest entry
    of K is used, which overestimates badly when K carries barrier diagonals.
    """

    def __init__(self, K: np.ndarray, n: int, scale: float | None = None):
        self.K = K
        self.n = n
        if scale is None:
            scale = float(np.abs(K).max())
        self.delta = 1e-11 * max(1.0, scale)
        self._refactor()

    def _refactor(self):
        M = self.K.copy()
        d = np.arange(M.shape[0])
        M[d[:self.n], d[:self.n]] += self.delta
        M[d[self.n:], d[self.n:]] -= self.delta
        self.lu = lu_factor(M, check_finite=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        norm = max(1.0, float(np.abs(rhs).max()))
        best = None
        best_res = np.inf
        for _ in range(4):
            sol = lu_solve(self.lu, rhs, check_finite=False)
            if np.all(np.isfinite(sol)):
                for _ in range(3):
                    r = rhs - self.K @ sol
                    res = float(np.abs(r).max())
                    if res <= 1e-11 * norm:
                        break
                    corr = lu_solve(self.lu, r, check_finite=False)
                    if not np.all(np.isfinite(corr)):
                        break
                    sol = sol + corr
                res = float(np.abs(rhs - self.K @ sol).max())
                if res < best_res and np.all(np.isfinite(sol)):
                    best, best_res = sol, res
                if res <= 1e-8 * norm:
                    return sol
            self.delta *= 1e3
            self._refactor()
        if best is None:
            raise np.linalg.LinAlgError("reduced KKT system is numerically singular")
        return best


def _solve_equality_qp(problem: QpProblem, tol: float) -> QpSolution:
    n, me = problem.num_variables, problem.num_eq
    K = np.zeros((n + me, n + me))
    K[:n, :n] = problem.hessian
    if me:
        K[:n, n:] = problem.eq_matrix.T
        K[n:, :n] = problem.eq_matrix
    rhs = np.concatenate([-problem.linear_cost, problem.eq_vector])
    sol = _solve_reduced(K, rhs, n)
    x, y = sol[:n], sol[n:]
    kkt = kkt_residual(problem, x, y)
    status = QpStatus.OPTIMAL if kkt.worst() <= tol else QpStatus.MAX_ITERATIONS
    return QpSolution(x, y, np.zeros(0), np.zeros(n), np.zeros(n), status, 1, kkt,
                      problem.objective(x))


def _polish(problem: QpProblem, G, h, lb_idx, ub_idx, x, z_all, s, tol,
            iterations) -> QpSolution | None:
    """Active-set polish of a near-optimal interior-point iterate.

    Degenerate optima (more tight rows than face dimensions, e.g. a friction
    cone vertex) defeat the interior-point endgame: the scaling matrix blows
    up before complementarity converges.  The iterate still identifies the
    active set well, so solve the equality-constrained subproblem it implies,
    adjust the set by primal violation / multiplier sign, and certify the
    result with nonnegative multipliers recovered by NNLS (valid even when
    the KKT multipliers are non-unique).  Returns None if no iterate on the
    way reaches the tolerance.
    """
    n = problem.num_variables
    H, g = problem.hessian, problem.linear_cost
    A, b = problem.eq_matrix, problem.eq_vector
    me = problem.num_eq
    mi = G.shape[0]
    act = (z_all > np.maximum(s, 1e-9)) | (h - G @ x < 1e-7 * (1.0 + np.abs(h)))
    feas_tol = max(tol, 1e-10)
    seen = set()
    bland = False  # once a set repeats, switch to smallest-index pivoting
    for _ in range(40):
        S = np.flatnonzero(act)
        key = S.tobytes()
        if key in seen:
            bland = True
        seen.add(key)
        C = np.vstack([A, G[S]]) if me else G[S]
        k = C.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        if k:
            K[:n, n:] = C.T
            K[n:, :n] = C
        rhs = np.concatenate([-g, b, h[S]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if not np.all(np.isfinite(sol)):
            return None
        # refine: the duals can be ~1e5 times the primal scale, so the raw
        # lstsq residual would otherwise leak into the complementarity check
        for _ in range(3):
            r = rhs - K @ sol
            if float(np.abs(r).max()) <= 1e-13 * max(1.0, float(np.abs(rhs).max())):
                break
            corr, *_ = np.linalg.lstsq(K, r, rcond=None)
            if not np.all(np.isfinite(corr)):
                break
            sol = sol + corr
        xs = sol[:n]
        z_kkt = sol[n + me:]
        if k and float(np.abs(C @ xs - rhs[n:]).max()) > 1e-6 * (1.0 + float(np.abs(rhs).max())):
            # contradictory active set: shed the worst-signed row and retry
            if z_kkt.size == 0:
                return None
            act[S[int(np.argmin(z_kkt))]] = False
            continue
        viol = G @ xs - h
        viol[S] = -np.inf
        worst = int(np.argmax(viol)) if mi else 0
        if mi and viol[worst] > feas_tol:
            if bland:
                worst = int(np.flatnonzero(viol > feas_tol)[0])
            if k:
                # if the violated row lies in the span of the active rows,
                # adding it yields a contradictory system; exchange it against
                # the blocking active row instead (dual ratio test; equality
                # rows are never droppable)
                gw = G[worst]
                lam, *_ = np.linalg.lstsq(C.T, gw, rcond=None)
                dep = float(np.abs(C.T @ lam - gw).max()) <= 1e-8 * max(1.0, float(np.abs(gw).max()))
                if dep:
                    lam_s = lam[me:]
                    elig = np.flatnonzero(lam_s > 1e-10)
                    if elig.size == 0:
                        if lam_s.size == 0:
                            return None  # forced by equalities alone
                        act[S[int(np.argmax(np.abs(lam_s)))]] = False
                    elif bland:
                        act[S[elig[0]]] = False
                    else:
                        ratio = np.maximum(z_kkt[elig], 0.0) / lam_s[elig]
                        act[S[elig[int(np.argmin(ratio))]]] = False
            act[worst] = True
            continue
        # certify BEFORE trusting multiplier signs: on a degenerate set
        # (dependent tight rows, e.g. the four pyramid faces of an unloaded
        # foot) the min-norm KKT multipliers can be negative even though a
        # nonnegative certificate exists.  Recover one by NNLS restricted to
        # the orthogonal complement of range(A'), then back out the free
        # equality duals by least squares — splitting them into signed parts
        # inside the NNLS would cancel catastrophically at large dual scale.
        target = -(H @ xs + g)
        GS_T = G[S].T if S.size else np.zeros((n, 0))
        if me:
            Qa, _ = np.linalg.qr(A.T)
            Gp = GS_T - Qa @ (Qa.T @ GS_T)
            tp = target - Qa @ (Qa.T @ target)
        else:
            Gp, tp = GS_T, target
        zS = nnls(Gp, tp)[0] if S.size else np.zeros(0)
        resid = target - (GS_T @ zS if S.size else 0.0)
        y = np.linalg.lstsq(A.T, resid, rcond=None)[0] if me else np.zeros(0)
        z_new = np.zeros(mi)
        z_new[S] = zS
        z, zl, zu = _unfold_duals(problem, z_new, lb_idx, ub_idx)
        kkt = kkt_residual(problem, xs, y, z, zl, zu)
        # stationarity and complementarity are judged relative to the dual
        # magnitude: with duals of size d the assembled gradient and the
        # products |z_i s_i| both carry an irreducible d * eps roundoff floor
        dual_scale = 1.0 + (float(z_new.max()) if z_new.size else 0.0)
        if me and y.size:
            dual_scale += float(np.abs(y).max())
        ok = (kkt.stationarity <= tol * dual_scale
              and kkt.primal <= max(tol, feas_tol)
              and kkt.dual <= tol
              and kkt.complementarity <= tol * dual_scale)
        if ok:
            return QpSolution(xs, y, z, zl, zu, QpStatus.OPTIMAL, iterations,
                              kkt, problem.objective(xs))
        if z_kkt.size and float(z_kkt.min()) < -1e-9:
            neg = np.flatnonzero(z_kkt < -1e-9)
            pick = neg[0] if bland else int(np.argmin(z_kkt))
            act[S[pick]] = False
            continue
        return None
    return None


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 100) -> QpSolution:
    """Solve a convex QP; returns the last iterate with status and residuals.

    Infeasibility is declared on a scaled Farkas certificate or on divergence
    of the dual iterates while the primal residual stagnates.
    """
    if not isinstance(problem, QpProblem):
        raise TypeError("problem must be a QpProblem")
    n = problem.num_variables
    H, g = problem.hessian, problem.linear_cost
    A, b = problem.eq_matrix, problem.eq_vector
    me = problem.num_eq
    G, h, lb_idx, ub_idx = _fold_bounds(problem)
    mi = G.shape[0]

    def pack(x, y, z_all, iters, status) -> QpSolution:
        z, zl, zu = _unfold_duals(problem, z_all, lb_idx, ub_idx)
        kkt = kkt_residual(problem, x, y, z, zl, zu)
        return QpSolution(x, y, z, zl, zu, status, iters, kkt, problem.objective(x))

    if mi == 0:
        return _solve_equality_qp(problem, tol)

    # static part of the augmented KKT matrix; the barrier diagonal -s/z is
    # refreshed in place each iteration
    K3 = np.zeros((n + me + mi, n + me + mi))
    K3[:n, :n] = H
    if me:
        K3[:n, n:n + me] = A.T
        K3[n:n + me, :n] = A
    K3[:n, n + me:] = G.T
    K3[n + me:, :n] = G
    diag3 = np.arange(n + me, n + me + mi)
    data_scale = max(float(np.abs(H).max()), float(np.abs(G).max()),
                     float(np.abs(A).max()) if me else 0.0)

    # -- starting point: one KKT solve with unit weight on the inequality
    # slacks (inequalities treated as soft equalities).  This yields a primal
    # point and a *consistent* dual guess in one shot; starting z at e against
    # slacks of wildly different scale mis-centers the first iterates badly.
    K0 = K3.copy()
    if me:
        K0[np.arange(n, n + me), np.arange(n, n + me)] = -1e-8
    K0[diag3, diag3] -= 1.0
    sol0 = _solve_reduced(K0, np.concatenate([-g, b, h]), n)
    x = sol0[:n]
    y = sol0[n:n + me]
    z0 = sol0[n + me:]
    s_raw = h - G @ x
    dp = max(0.0, -1.5 * float(s_raw.min())) + 1e-2
    dd = max(0.0, -1.5 * float(z0.min())) + 1e-2
    s1 = s_raw + dp
    z1 = z0 + dd
    dot = float(s1 @ z1)
    s = s1 + 0.5 * dot / z1.sum()
    z = z1 + 0.5 * dot / s1.sum()

    best_primal = np.inf
    stall = 0
    it = 0
    e = np.ones(mi)
    restarts_left = 2
    best_iter = (np.inf, x, y, z, s)  # least-worst iterate, seeds the polish

    for it in range(1, max_iter + 1):
        r_d = H @ x + g + G.T @ z + (A.T @ y if me else 0.0)
        r_p = (A @ x - b) if me else np.zeros(0)
        r_g = G @ x + s - h
        mu = float(s @ z) / mi
        res_p = max(float(np.abs(r_p).max()) if me else 0.0, float(np.abs(r_g).max()))
        res_d = float(np.abs(r_d).max())
        comp = float(np.abs(s * z).max())
        # the iterate score uses dual-scaled complementarity, same as the
        # acceptance test: an absolute comp would rank early garbage iterates
        # (small duals, big violations) above late ones that have identified
        # the active set, and the polish would start from the wrong point
        score = max(res_p, res_d, comp / (1.0 + float(z.max())))
        if score < best_iter[0]:
            best_iter = (score, x.copy(), y.copy(), z.copy(), s.copy())

        # complementarity is scaled by the dual magnitude: |z_i s_i| cannot
        # fall below (dual size) * (roundoff in s_i) no matter how converged
        if res_p <= tol and res_d <= tol and comp <= tol * (1.0 + float(z.max())):
            # the interior iterate is within tol of the optimum but still a
            # central-path point; one active-set solve lands on the exact
            # face (vertex solutions agree with direct enumeration to
            # machine precision instead of ~tol)
            polished = _polish(problem, G, h, lb_idx, ub_idx, x, z, s,
                               tol, it - 1)
            if polished is not None:
                return polished
            return pack(x, y, z, it - 1, QpStatus.OPTIMAL)

        # -- infeasibility certificates --
        dual_norm = max(float(np.abs(z).max()), float(np.abs(y).max()) if me else 0.0)
        if dual_norm > 1e4:
            yn = y / dual_norm if me else y
            zn = z / dual_norm
            ray = G.T @ zn + (A.T @ yn if me else 0.0)
            gap = float(h @ zn + (b @ yn if me else 0.0))
            if float(np.abs(ray).max()) <= 1e-9 and gap < -1e-9:
                return pack(x, y, z, it - 1, QpStatus.INFEASIBLE)
        if res_p >= best_primal * 0.9999 and res_p > max(np.sqrt(tol), 1e2 * tol):
            stall += 1
        else:
            stall = 0
        best_primal = min(best_primal, res_p)
        if (stall > 25 and dual_norm > 1e6) or dual_norm > 1e13:
            # divergence without a Farkas certificate: degenerate optima look
            # like this too, so try to finish combinatorially first, and only
            # claim infeasibility if the diverging duals approximate a
            # certificate; otherwise admit non-convergence
            _, xb, yb, zb, sb = best_iter
            polished = _polish(problem, G, h, lb_idx, ub_idx, xb, zb, sb, tol, it - 1)
            if polished is not None:
                return polished
            yn = y / dual_norm if me else y
            zn = z / dual_norm
            ray = G.T @ zn + (A.T @ yn if me else 0.0)
            gap = float(h @ zn + (b @ yn if me else 0.0))
            if float(np.abs(ray).max()) <= 1e-6 and gap < -1e-8:
                return pack(x, y, z, it - 1, QpStatus.INFEASIBLE)
            return pack(x, y, z, it - 1, QpStatus.MAX_ITERATIONS)

        # -- augmented Newton system shared by predictor and corrector --
        # The barrier term enters as the *diagonal* block -s/z: condensing it
        # into H as G'(z/s)G instead mixes entries of size z/s into every
        # Hessian coefficient, and once an active row pushes z/s past ~1e13
        # the equality rows drown in roundoff and the primal residual freezes.
        # On the diagonal the same dynamic range is benign under partial
        # pivoting (an extreme pivot decouples its own row, nothing else).
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d3 = s / z
        d3 = np.where(np.isfinite(d3), np.minimum(d3, 1e16), 1e16)
        K = K3.copy()
        K[diag3, diag3] -= d3
        try:
            kkt_fact = _KktSolver(K, n, scale=data_scale)
        except np.linalg.LinAlgError:
            break

        def newton_step(r_c):
            # r_c convention: Z ds + S dz = -r_c
            rhs = np.concatenate([-r_d, -r_p, -r_g + r_c / z])
            sol = kkt_fact.solve(rhs)
            dx = sol[:n]
            dy = sol[n:n + me]
            dz = sol[n + me:]
            ds = -r_g - G @ dx
            return dx, dy, ds, dz

        def max_step(v, dv):
            neg = dv < 0.0
            if not neg.any():
                return 1.0
            with np.errstate(over="ignore"):
                return min(1.0, float(np.min(-v[neg] / dv[neg])))

        try:
            # predictor (affine scaling)
            dx_a, dy_a, ds_a, dz_a = newton_step(s * z)
            a_p = max_step(s, ds_a)
            a_d = max_step(z, dz_a)
            mu_aff = float((s + a_p * ds_a) @ (z + a_d * dz_a)) / mi
            sigma = (max(mu_aff, 0.0) / mu) ** 3 if mu > 0 else 0.0
            sigma = min(max(sigma, 1e-10), 0.99)

            # corrector; one common step length — a QP's dual residual
            # couples x and z, so advancing them at different rates breaks
            # the Newton linearization
            r_c = s * z + ds_a * dz_a - sigma * mu * e
            dx, dy, ds, dz = newton_step(r_c)
        except np.linalg.LinAlgError:
            break
        frac = 0.995 if mu > 1e-6 else 0.9999
        alpha = min(frac * min(max_step(s, ds), max_step(z, dz)), 1.0)
        if alpha < 1e-13:
            # wedged: a slack pinned at zero on a still-violated row while the
            # duals race off in a near-null combination.  The primal progress
            # so far is real, so first try to finish combinatorially; failing
            # that, keep x and re-center the barrier variables (slacks refit
            # to the current point, unit duals) and go around again.
            _, xb, yb, zb, sb = best_iter
            polished = _polish(problem, G, h, lb_idx, ub_idx, xb, zb, sb,
                               tol, it)
            if polished is not None:
                return polished
            # infeasible problems also die by step collapse; certify from the
            # diverged duals BEFORE a restart wipes them back to unit scale
            dual_norm = max(float(np.abs(z).max()),
                            float(np.abs(y).max()) if me else 0.0)
            if dual_norm > 1e4:
                yn = y / dual_norm if me else y
                zn = z / dual_norm
                ray = G.T @ zn + (A.T @ yn if me else 0.0)
                gap = float(h @ zn + (b @ yn if me else 0.0))
                if float(np.abs(ray).max()) <= 1e-6 and gap < -1e-8:
                    return pack(x, y, z, it, QpStatus.INFEASIBLE)
            if restarts_left > 0 and it < max_iter - 5:
                restarts_left -= 1
                s_raw = h - G @ x
                s1 = s_raw + max(0.0, -1.5 * float(s_raw.min())) + 1e-2
                z1 = np.ones(mi)
                dot = float(s1 @ z1)
                s = s1 + 0.5 * dot / z1.sum()
                z = z1 + 0.5 * dot / s1.sum()
                if me:
                    y_cap = float(np.abs(y).max())
                    if y_cap > 1e2:
                        y = y * (1e2 / y_cap)
                best_iter = (np.inf, x.copy(), y.copy(), z.copy(), s.copy())
                best_primal = np.inf
                stall = 0
                continue
            break

        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        if me:
            y = y + alpha * dy

    # endgame: a stalled interior-point run near a degenerate optimum still
    # identifies the active set; try to finish the job combinatorially
    _, xb, yb, zb, sb = best_iter
    polished = _polish(problem, G, h, lb_idx, ub_idx, xb, zb, sb, tol, it)
    if polished is not None:
        return polished
    # the step-length collapse that lands here is also how an infeasible
    # problem dies (blocking slack pinned at zero, duals racing off); accept
    # the diverged duals as a certificate if they approximate a Farkas ray
    dual_norm = max(float(np.abs(z).max()), float(np.abs(y).max()) if me else 0.0)
    if dual_norm > 1e4:
        yn = y / dual_norm if me else y
        zn = z / dual_norm
        ray = G.T @ zn + (A.T @ yn if me else 0.0)
        gap = float(h @ zn + (b @ yn if me else 0.0))
        if float(np.abs(ray).max()) <= 1e-6 and gap < -1e-8:
            return pack(x, y, z, it, QpStatus.INFEASIBLE)
    return pack(x, y, z, it, QpStatus.MAX_ITERATIONS)


def active_set_oracle(problem: QpProblem, tol: float = 1e-9) -> QpSolution:
    """Exhaustive active-set enumeration for cross-checking the solver.

    Intended for test problems only; refuses more than 20 folded inequality
    rows.  Requires a strictly convex Hessian so the optimum is unique.
    """
    n = problem.num_variables
    H, g = problem.hessian, problem.linear_cost
    A, b = problem.eq_matrix, problem.eq_vector
    me = problem.num_eq
    G, h, lb_idx, ub_idx = _fold_bounds(problem)
    mi = G.shape[0]
    if mi > 20:
        raise ValueError(f"active-set enumeration limited to 20 inequalities, got {mi}")

    best = None
    best_obj = np.inf
    scanned = 0
    for r in range(mi + 1):
        for subset in itertools.combinations(range(mi), r):
            scanned += 1
            S = list(subset)
            Gs = G[S]
            k = me + len(S)
            K = np.zeros((n + k, n + k))
            K[:n, :n] = H
            C = np.vstack([A, Gs]) if me else Gs
            if k:
                K[:n, n:] = C.T
                K[n:, :n] = C
            rhs = np.concatenate([-g, b, h[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)):
                continue
            if float(np.abs(K @ sol - rhs).max()) > 1e-7:
                continue
            x = sol[:n]
            y = sol[n:n + me]
            z_s = sol[n + me:]
            if me and float(np.abs(A @ x - b).max()) > tol:
                continue
            if mi and float((G @ x - h).max()) > tol:
                continue
            if len(S) and float(z_s.min()) < -tol:
                continue
            obj = problem.objective(x)
            if obj < best_obj - 1e-12:
                z_all = np.zeros(mi)
                z_all[S] = np.maximum(z_s, 0.0)
                best = (x, y, z_all)
                best_obj = obj
    if best is None:
        raise ValueError("active-set enumeration found no feasible KKT point")
    x, y, z_all = best
    z, zl, zu = _unfold_duals(problem, z_all, lb_idx, ub_idx)
    kkt = kkt_residual(problem, x, y, z, zl, zu)
    return QpSolution(x, y, z, zl, zu, QpStatus.OPTIMAL, scanned, kkt, best_obj)


def dump_qp(problem: QpProblem, path, solution: QpSolution | None = None, note: str = ""):
    """Write problem (and optionally a solution attempt) to JSON for offline debugging."""
    payload = {"note": note, "problem": problem.to_dict()}
    if solution is not None:
        payload["solution"] = {
            "x_star": solution.x_star.tolist(),
            "status": solution.status.value,
            "iterations": solution.iterations,
            "objective": solution.objective,
            "kkt": {
                "stationarity": solution.kkt.stationarity,
                "primal": solution.kkt.primal,
                "dual": solution.kkt.dual,
                "complementarity": solution.kkt.complementarity,
            },
        }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
