"""Gait-graph construction, the domain indicator, support-polygon
membership (cross-checked against an LP oracle), and serialization."""
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from quadsteer import gait
from quadsteer.gait import (ALL_FEET, ContactId, DomainSpec, GaitGraph,
                            StanceGeometry, build_trot_graph,
                            cop_parametrization, domain_indicator,
                            graph_from_dict, hull_membership)


# ------------------------------------------------------------- indicator

def test_domain_indicator_trivial_table():
    # N_d = 4: samples 0..3 -> domain 1, 4..7 -> domain 2, ...
    assert [domain_indicator(k, 20, 4) for k in (0, 3, 4, 7, 8)] == [1, 1, 2, 2, 3]


def test_domain_indicator_clamps_past_last():
    assert domain_indicator(79, 20, 4) == 20
    assert domain_indicator(80, 20, 4) == 20
    assert domain_indicator(10_000, 20, 4) == 20


@given(st.integers(0, 500), st.integers(1, 30), st.integers(1, 8))
def test_domain_indicator_monotone_and_bounded(k, M, Nd):
    z = domain_indicator(k, M, Nd)
    assert 1 <= z <= M
    assert z <= domain_indicator(k + 1, M, Nd)


# ------------------------------------------------------------ trot graphs

def test_trot_shape_and_bookends():
    g = build_trot_graph("forward", num_domains=20)
    assert g.num_domains == 20
    assert g.domains[0].active == ALL_FEET
    assert g.domains[-1].active == ALL_FEET
    for d in g.domains[1:-1]:
        assert d.num_contacts == 2
        # diagonal pairs only
        assert set(d.active) in ({ContactId.FL, ContactId.RR},
                                 {ContactId.FR, ContactId.RL})


def test_trot_alternates_pairs():
    g = build_trot_graph("forward", num_domains=10)
    pairs = [set(d.active) for d in g.domains[1:-1]]
    for a, b in zip(pairs, pairs[1:]):
        assert a != b


def test_planted_feet_never_teleport():
    """A foot's position may only change across a domain where it swings."""
    g = build_trot_graph("diagonal", num_domains=12)
    for prev, curr in zip(g.domains, g.domains[1:]):
        for leg in prev.active:
            if leg in curr.active:
                before, after = prev.foothold(leg), curr.foothold(leg)
                swung = leg in g.swing_feet(prev.index)
                if not swung:
                    assert np.array_equal(before, after), (prev.index, leg)


def test_every_swing_advances_by_step():
    step = np.array([0.06, -0.02])
    g = build_trot_graph("forward", step=step, num_domains=8)
    for z in range(1, 8):
        for leg in g.swing_feet(z):
            a, b = g.swing_segment(leg, z)
            assert np.abs((b - a) - step).max() < 1e-12


def test_final_stance_centered_on_target():
    g = build_trot_graph("forward", num_domains=20, end_center=(0.0, 0.0))
    assert np.abs(g.domains[-1].centroid()).max() < 1e-12
    g2 = build_trot_graph("sideways", num_domains=6, end_center=(0.3, -0.1))
    assert np.abs(g2.domains[-1].centroid() - [0.3, -0.1]).max() < 1e-12


def test_in_place_graph_is_stationary():
    g = build_trot_graph("in_place", num_domains=8)
    ref = g.domains[0]
    for d in g.domains:
        for leg in d.active:
            assert np.array_equal(d.foothold(leg), ref.foothold(leg))


def test_unknown_direction_rejected():
    with pytest.raises(ValueError):
        build_trot_graph("sideways_up")
    with pytest.raises(ValueError):
        build_trot_graph("forward", num_domains=1)


def test_cop_parametrization_counts():
    g = build_trot_graph("forward", num_domains=6)
    C, nc = cop_parametrization(g.domains[0])
    assert nc == 4 and C.shape == (2, 4)
    C2, nc2 = cop_parametrization(g.domains[1])
    assert nc2 == 2 and C2.shape == (2, 2)


# --------------------------------------------------------- hull membership

def lp_membership_oracle(point, C):
    """Feasibility LP: exists lambda >= 0, sum = 1, C lambda = point."""
    n = C.shape[1]
    res = linprog(np.zeros(n),
                  A_eq=np.vstack([C, np.ones((1, n))]),
                  b_eq=np.concatenate([point, [1.0]]),
                  bounds=[(0, None)] * n, method="highs")
    return res.status == 0


@given(st.integers(0, 10_000))
@settings(max_examples=120)
def test_hull_membership_matches_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    C = rng.uniform(-0.3, 0.3, size=(2, n))
    p = rng.uniform(-0.4, 0.4, size=2)
    q = hull_membership(p, C, tol=1e-9)
    assert q.inside == lp_membership_oracle(p, C)
    if q.inside:
        w = q.weights
        assert w is not None and abs(w.sum() - 1.0) < 1e-7
        assert w.min() > -1e-9
        assert np.abs(C @ w - p).max() < 1e-7
    else:
        assert q.distance > 0
        assert q.normal is not None
        # separating halfspace: normal' p > offset >= normal' c_i for all i
        assert q.normal @ p - q.offset == pytest.approx(q.distance, rel=1e-6)
        assert (q.normal @ C).max() <= q.offset + 1e-9


def test_membership_on_edge_is_exact():
    C = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    q = hull_membership([0.5, 0.0], C)
    assert q.inside and q.distance == 0.0
    assert np.abs(C @ q.weights - [0.5, 0.0]).max() < 1e-12


def test_membership_outside_distance_exact():
    # unit square, probe straight above the top edge
    C = np.array([[0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    q = hull_membership([0.5, 1.7], C)
    assert not q.inside
    assert q.distance == pytest.approx(0.7, abs=1e-12)
    # and off a corner (diagonal distance)
    q2 = hull_membership([2.0, 2.0], C)
    assert q2.distance == pytest.approx(np.sqrt(2.0), rel=1e-12)


def test_membership_degenerate_two_points():
    C = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert hull_membership([0.5, 0.0], C).inside
    q = hull_membership([0.5, 0.2], C)
    assert not q.inside and q.distance == pytest.approx(0.2, abs=1e-12)


def test_membership_single_point():
    C = np.array([[0.3], [-0.1]])
    assert hull_membership([0.3, -0.1], C).inside
    q = hull_membership([0.3, 0.9], C)
    assert not q.inside and q.distance == pytest.approx(1.0, rel=1e-12)


# ------------------------------------------------------ barycentric weights

def test_barycentric_weights_interior_reconstructs():
    C = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    p = np.array([0.25, 0.25])
    w = gait.barycentric_weights(C, p)
    assert abs(w.sum() - 1.0) < 1e-9
    assert w.min() > -1e-9
    assert np.abs(C @ w - p).max() < 1e-6


# ------------------------------------------------------------ serialization

def test_graph_round_trip(tmp_path):
    g = build_trot_graph("diagonal", num_domains=8)
    path = tmp_path / "graph.json"
    g.save(path)
    g2 = gait.load_graph(path)
    assert g2.num_domains == g.num_domains
    for a, b in zip(g.domains, g2.domains):
        assert a.active == b.active
        assert np.array_equal(a.footholds, b.footholds)
        assert a.grid_count == b.grid_count


def test_graph_dict_rejects_bad_feet():
    g = build_trot_graph("forward", num_domains=4)
    data = g.to_dict()
    data["domains"][0]["active"] = [0, 0, 1, 2]
    with pytest.raises((ValueError, KeyError)):
        graph_from_dict(data)


def test_domain_spec_validation():
    with pytest.raises(ValueError):
        DomainSpec(index=1, active=(ContactId.FL,),
                   footholds=np.zeros((2, 2)), grid_count=4)
    with pytest.raises(ValueError):
        DomainSpec(index=1, active=(ContactId.FR, ContactId.FL),
                   footholds=np.zeros((2, 2)), grid_count=4)  # wrong order


def test_stance_geometry_offsets():
    geo = StanceGeometry()
    offs = geo.offsets()
    assert set(offs) == set(ALL_FEET)
    xs = sorted(v[0] for v in offs.values())
    assert xs[0] == -xs[-1]  # fore/aft symmetric
