"""Contact schedule for quadrupedal trot.

A gait is an ordered list of contact domains.  Each domain pins the set of
active feet and their planted positions; the center of pressure available to
the template model is any convex combination of the active footholds, so the
support polygon never needs explicit halfspace form.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls as _nnls

from .qp import QpProblem, solve_qp


class ContactId(enum.IntEnum):
    """Feet in canonical order (front/rear, left/right)."""

    FL = 0
    FR = 1
    RL = 2
    RR = 3


ALL_FEET = (ContactId.FL, ContactId.FR, ContactId.RL, ContactId.RR)

# Diagonal trot pairs; PAIR_A is the stance pair of the first double-support domain.
PAIR_A = (ContactId.FL, ContactId.RR)
PAIR_B = (ContactId.FR, ContactId.RL)

DEFAULT_STEPS = {
    "forward": (0.10, 0.0),
    "backward": (-0.10, 0.0),
    "sideways": (0.0, 0.05),
    "diagonal": (0.07, 0.04),
    "in_place": (0.0, 0.0),
}


@dataclass(frozen=True)
class StanceGeometry:
    """Nominal rectangle of footholds under the torso (meters)."""

    length: float = 0.5
    width: float = 0.3

    def offsets(self) -> dict[ContactId, np.ndarray]:
        a, b = 0.5 * self.length, 0.5 * self.width
        return {
            ContactId.FL: np.array([a, b]),
            ContactId.FR: np.array([a, -b]),
            ContactId.RL: np.array([-a, b]),
            ContactId.RR: np.array([-a, -b]),
        }


@dataclass(frozen=True)
class DomainSpec:
    """One contact domain: active feet, their planted positions, sample count."""

    index: int
    active: tuple[ContactId, ...]
    footholds: np.ndarray  # 2 x n_c, columns follow `active`
    grid_count: int

    def __post_init__(self):
        fh = np.asarray(self.footholds, dtype=float)
        if fh.shape != (2, len(self.active)):
            raise ValueError("footholds must be 2 x n_c matching the active feet")
        if len(self.active) == 0:
            raise ValueError("a domain needs at least one active foot")
        if tuple(sorted(self.active)) != self.active:
            raise ValueError("active feet must be listed in canonical order")
        if self.grid_count < 1:
            raise ValueError("grid_count must be at least 1")
        object.__setattr__(self, "footholds", fh)

    @property
    def num_contacts(self) -> int:
        return len(self.active)

    def foothold(self, leg: ContactId) -> np.ndarray | None:
        for i, other in enumerate(self.active):
            if other == leg:
                return self.footholds[:, i].copy()
        return None

    def centroid(self) -> np.ndarray:
        return self.footholds.mean(axis=1)


@dataclass(frozen=True)
class GaitGraph:
    """Ordered domains; edges are implicit (i -> i+1, last persists)."""

    domains: tuple[DomainSpec, ...]
    direction: str = ""

    def __post_init__(self):
        if not self.domains:
            raise ValueError("gait graph needs at least one domain")
        for pos, dom in enumerate(self.domains, start=1):
            if dom.index != pos:
                raise ValueError("domain indices must run 1..M in order")

    @property
    def num_domains(self) -> int:
        return len(self.domains)

    @property
    def grid_count(self) -> int:
        return self.domains[0].grid_count

    def domain(self, zeta: int) -> DomainSpec:
        """Domain by 1-based indicator value; the final domain persists."""
        if zeta < 1:
            raise ValueError("domain indicator starts at 1")
        return self.domains[min(zeta, self.num_domains) - 1]

    def swing_feet(self, zeta: int) -> tuple[ContactId, ...]:
        active = set(self.domain(zeta).active)
        return tuple(leg for leg in ALL_FEET if leg not in active)

    def swing_segment(self, leg: ContactId, zeta: int) -> tuple[np.ndarray, np.ndarray]:
        """(liftoff, touchdown) footholds of a leg swinging during domain `zeta`."""
        if zeta <= 1 or zeta >= self.num_domains:
            raise ValueError("swing segments exist only in interior domains")
        prev = self.domain(zeta - 1).foothold(leg)
        nxt = self.domain(zeta + 1).foothold(leg)
        if prev is None or nxt is None:
            raise ValueError(f"{leg.name} is not a swing leg of domain {zeta}")
        return prev, nxt

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "domains": [
                {
                    "index": d.index,
                    "active": [leg.name for leg in d.active],
                    "footholds": d.footholds.tolist(),
                    "grid_count": d.grid_count,
                }
                for d in self.domains
            ],
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def graph_from_dict(data: dict) -> GaitGraph:
    domains = tuple(
        DomainSpec(
            index=d["index"],
            active=tuple(ContactId[name] for name in d["active"]),
            footholds=np.asarray(d["footholds"], dtype=float),
            grid_count=int(d["grid_count"]),
        )
        for d in data["domains"]
    )
    return GaitGraph(domains, data.get("direction", ""))


def load_graph(path) -> GaitGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))


def domain_indicator(k: int, num_domains: int, grid_count: int) -> int:
    """1-based domain index at sample k; clamps to the final domain."""
    if k < 0:
        raise ValueError("sample index must be nonnegative")
    if num_domains < 1 or grid_count < 1:
        raise ValueError("num_domains and grid_count must be positive")
    return min(k // grid_count + 1, num_domains)


def build_trot_graph(direction: str = "forward", step=None, num_domains: int = 20,
                     grid_count: int = 4, stance: StanceGeometry = StanceGeometry(),
                     end_center=(0.0, 0.0)) -> GaitGraph:
    """Quadruple-support first and last domains; alternating diagonal pairs between.

    Every swing advances the swinging pair by `step`.  Footholds are laid out
    so the final stance rectangle is centered on `end_center` (the steering
    target is most naturally expressed at the origin).
    """
    if direction not in DEFAULT_STEPS:
        raise ValueError(f"unknown direction {direction!r}; options: {sorted(DEFAULT_STEPS)}")
    if num_domains < 2:
        raise ValueError("a trot needs at least the two quadruple-support domains")
    step = np.asarray(DEFAULT_STEPS[direction] if step is None else step, dtype=float).reshape(2)
    end_center = np.asarray(end_center, dtype=float).reshape(2)

    # Swing pair of interior domain i (2-based): PAIR_B first, then alternating.
    def swing_pair(i: int):
        return PAIR_B if (i % 2) == 0 else PAIR_A

    n_swings = {leg: 0 for leg in ALL_FEET}
    for i in range(2, num_domains):
        for leg in swing_pair(i):
            n_swings[leg] += 1
    total = sum(n_swings.values())
    start_center = end_center - step * (total / 4.0)

    offsets = stance.offsets()
    pos = {leg: start_center + offsets[leg] for leg in ALL_FEET}

    def make_domain(index: int, active: tuple[ContactId, ...]) -> DomainSpec:
        feet = tuple(sorted(active))
        fh = np.column_stack([pos[leg] for leg in feet])
        return DomainSpec(index=index, active=feet, footholds=fh, grid_count=grid_count)

    domains = [make_domain(1, ALL_FEET)]
    for i in range(2, num_domains):
        swing = swing_pair(i)
        stance_pair = tuple(leg for leg in ALL_FEET if leg not in swing)
        domains.append(make_domain(i, stance_pair))
        for leg in swing:  # swing feet land advanced, active again next domain
            pos[leg] = pos[leg] + step
    domains.append(make_domain(num_domains, ALL_FEET))
    return GaitGraph(tuple(domains), direction)


def cop_parametrization(domain: DomainSpec) -> tuple[np.ndarray, int]:
    """Contact matrix C (2 x n_c) with u = C lam, lam on the standard simplex."""
    return domain.footholds.copy(), domain.num_contacts


def barycentric_weights(C: np.ndarray, point, reg: float = 1e-9) -> np.ndarray:
    """Simplex weights whose COP is closest (least squares) to `point`.

    A tiny pull toward uniform weights breaks ties deterministically when the
    footholds make the representation non-unique.
    """
    C = np.asarray(C, dtype=float)
    p = np.asarray(point, dtype=float).reshape(2)
    n = C.shape[1]
    if n == 1:
        return np.ones(1)
    H = 2.0 * (C.T @ C + reg * np.eye(n))
    g = -2.0 * (C.T @ p + reg * np.full(n, 1.0 / n))
    prob = QpProblem(
        hessian=H, linear_cost=g,
        eq_matrix=np.ones((1, n)), eq_vector=np.array([1.0]),
        lower=np.zeros(n), upper=np.ones(n),
    )
    sol = solve_qp(prob, tol=1e-10)
    lam = np.clip(sol.x_star, 0.0, None)
    return lam / lam.sum()


@dataclass(frozen=True)
class HullQuery:
    """Result of a support-polygon membership test."""

    inside: bool
    weights: np.ndarray | None
    distance: float
    normal: np.ndarray | None = None
    offset: float = 0.0


def _segment_projection(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    d = b - a
    denom = float(d @ d)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ d / denom, 0.0, 1.0))
    return a + t * d


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Counter-clockwise convex hull (monotone chain), collinear points dropped."""
    uniq = np.unique(pts, axis=0)
    if uniq.shape[0] <= 2:
        return uniq
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    pts = uniq[order]

    def cross2(a, b):
        return a[0] * b[1] - a[1] * b[0]

    def chain(points):
        out = []
        for q in points:
            while len(out) >= 2 and cross2(out[-1] - out[-2], q - out[-2]) <= 0.0:
                out.pop()
            out.append(q)
        return out

    lower = chain(pts)
    upper = chain(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def _certificate_weights(C: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Nonnegative weights reconstructing p, exact on hull boundaries.

    Joint NNLS on [C; 1] resolves the active support combinatorially, where a
    regularized least squares would leave stray mass on far-away footholds.
    """
    A = np.vstack([C, np.ones((1, C.shape[1]))])
    w, _ = _nnls(A, np.concatenate([p, [1.0]]))
    total = w.sum()
    if total <= 0.0:
        return np.full(C.shape[1], 1.0 / C.shape[1])
    return w / total


def hull_membership(point, C: np.ndarray, tol: float = 1e-8) -> HullQuery:
    """Test whether a ground point lies in the convex hull of the footholds.

    Inside: returns certifying simplex weights.  Outside: returns the exact
    distance to the hull and a separating halfspace n'v <= c satisfied by
    every foothold and violated by the point.  The decision is made
    geometrically (edge half-planes / segment projection); a least-squares
    projection would misreport points lying exactly on the boundary, where
    its multipliers vanish and starve the optimizer of a stopping signal.
    """
    C = np.asarray(C, dtype=float)
    p = np.asarray(point, dtype=float).reshape(2)
    hull = _convex_hull(C.T)

    if hull.shape[0] <= 2:
        closest = (hull[0] if hull.shape[0] == 1
                   else _segment_projection(hull[0], hull[1], p))
        dist = float(np.linalg.norm(closest - p))
        if dist <= tol:
            return HullQuery(True, _certificate_weights(C, p), dist)
        normal = (p - closest) / dist
        return HullQuery(False, None, dist, normal, float(normal @ closest))

    center = hull.mean(axis=0)
    worst = -np.inf
    m = hull.shape[0]
    for i in range(m):
        a, b = hull[i], hull[(i + 1) % m]
        edge = b - a
        normal = np.array([edge[1], -edge[0]])
        normal /= np.linalg.norm(normal)
        if normal @ (center - a) > 0.0:
            normal = -normal
        worst = max(worst, float(normal @ (p - a)))
    if worst <= tol:
        return HullQuery(True, _certificate_weights(C, p), max(worst, 0.0))
    closest = min((_segment_projection(hull[i], hull[(i + 1) % m], p)
                   for i in range(m)),
                  key=lambda c: float(np.linalg.norm(c - p)))
    dist = float(np.linalg.norm(closest - p))
    normal = (p - closest) / dist
    return HullQuery(False, None, dist, normal, float(normal @ closest))
