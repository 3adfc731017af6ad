"""Event QP assembly (exact dimension counts), rollout economy, and the
steering loop's structural invariants."""
import numpy as np
import pytest

from quadsteer import lip, mpc
from quadsteer.gait import build_trot_graph, cop_parametrization, hull_membership
from quadsteer.mpc import (EventMpc, MpcConfig, MpcInfeasibleError,
                           build_mpc_qp, downsample_map, reference_trajectory,
                           rollout_closed_loop, solve_event)

PARAMS = lip.LipParams(com_height=0.5, friction_coeff=0.4, sample_time=0.08)


def default_setup(num_domains=20, direction="forward"):
    graph = build_trot_graph(direction, num_domains=num_domains)
    config = MpcConfig(horizon=8, state_weight=1.0, terminal_weight=1000.0,
                       cop_weight=1.0, lambda_weight=0.01,
                       target_state=(0.0, 0.0, 0.0, 0.0))
    return config, graph


# ----------------------------------------------------------- exact counts

def expected_num_vars(zetas):
    # states + COPs + one simplex weight per vertex of each stage's polygon
    n_c = {1: 4, 20: 4}
    return 8 * 4 + 8 * 2 + sum(n_c.get(z, 2) for z in zetas)


def test_decision_variable_counts_all_events():
    """64 mid-gait, 72 at either bookend, 80 once clamped to the final stance."""
    config, graph = default_setup()
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    sizes = {}
    for zeta in range(1, 21):
        k = (zeta - 1) * graph.grid_count
        problem, layout = build_mpc_qp(config, graph, PARAMS, x0, k)
        n = problem.hessian.shape[0]
        assert n == expected_num_vars(layout.zetas)
        sizes[zeta] = n
    assert sizes[1] == 72
    assert all(sizes[z] == 64 for z in range(2, 19))
    assert sizes[19] == 72
    assert sizes[20] == 80


def test_constraint_row_counts():
    config, graph = default_setup()
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    problem, _ = build_mpc_qp(config, graph, PARAMS, x0, 0)
    N = config.horizon
    # recursion (4N) + COP coupling (2N) + simplex sums (N)
    assert problem.eq_matrix.shape[0] == 4 * N + 2 * N + N == 56
    # four friction facets per stage
    assert problem.ineq_matrix.shape[0] == 4 * N == 32


def test_event_alignment_enforced():
    config, graph = default_setup()
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    with pytest.raises(ValueError):
        build_mpc_qp(config, graph, PARAMS, x0, 3)


# ------------------------------------------------------------- reference

def test_reference_ramp_endpoints():
    config, graph = default_setup()
    x0 = np.array([-0.3, 0.0, 0.1, 0.0])
    d = reference_trajectory(config, graph, PARAMS, x0, 0)
    assert np.array_equal(d[0], x0)
    T_f = graph.num_domains * graph.grid_count
    # far from the rendezvous the tail of an 8-step preview is still ramping
    assert not np.allclose(d[-1], config.target_state)
    d_late = reference_trajectory(config, graph, PARAMS, x0, T_f - 2)
    assert np.allclose(d_late[3], config.target_state)
    assert np.allclose(d_late[-1], config.target_state)


def test_reference_positions_linear():
    config, graph = default_setup()
    x0 = np.array([-0.4, 0.0, 0.0, 0.0])
    d = reference_trajectory(config, graph, PARAMS, x0, 0)
    xs = d[:, 0]
    diffs = np.diff(xs)
    assert np.abs(diffs - diffs[0]).max() < 1e-12
    # velocity rows carry the ramp slope
    assert d[1, 1] == pytest.approx(diffs[0] / PARAMS.sample_time)


# ------------------------------------------------- fixed point & solutions

def test_target_is_zero_cost_fixed_point():
    """At the steering target inside the final stance the QP returns 'stay'."""
    config, graph = default_setup()
    x_f = np.asarray(config.target_state)
    k_last = (graph.num_domains - 1) * graph.grid_count
    sol, law = solve_event(config, graph, PARAMS, x_f, k_last)
    assert sol.objective < 1e-12
    assert np.abs(law.controls - x_f[[0, 2]]).max() < 1e-7
    assert np.abs(sol.predicted_states - x_f).max() < 1e-7


def test_solution_satisfies_template_recursion():
    config, graph = default_setup()
    disc = lip.discretize_zoh(PARAMS)
    x0 = lip.equilibrium_state(graph.domains[0].centroid()) + [0.01, 0, -0.02, 0]
    sol, _ = solve_event(config, graph, PARAMS, x0, 0, disc)
    for i in range(config.horizon):
        x_next = disc.A @ sol.predicted_states[i] + disc.B @ sol.cop_sequence[i]
        assert np.abs(x_next - sol.predicted_states[i + 1]).max() < 1e-7


def test_solution_cops_in_support_polygons():
    config, graph = default_setup()
    x0 = lip.equilibrium_state(graph.domains[0].centroid()) + [0.02, 0, 0.01, 0]
    sol, _ = solve_event(config, graph, PARAMS, x0, 0)
    for i, z in enumerate(sol.zetas):
        C, _ = cop_parametrization(graph.domain(z))
        assert hull_membership(sol.cop_sequence[i], C, tol=1e-6).inside
        lam = sol.lambda_sequence[i]
        assert lam.min() > -1e-8 and abs(lam.sum() - 1.0) < 1e-8
        assert np.abs(C @ lam - sol.cop_sequence[i]).max() < 1e-8


def test_infeasible_event_raises():
    config, graph = default_setup()
    # runaway velocity: no COP in the polygon can satisfy the friction rows
    x_bad = np.array([0.0, 25.0, 0.0, 0.0])
    with pytest.raises(MpcInfeasibleError) as exc:
        solve_event(config, graph, PARAMS, x_bad, 0)
    assert exc.value.sample == 0 and exc.value.zeta == 1


# --------------------------------------------------------------- rollouts

def test_rollout_event_economy():
    """One QP per event boundary, never one per sample."""
    config, graph = default_setup(num_domains=6)
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    res = rollout_closed_loop(config, graph, PARAMS, x0, total_events=9)
    K = res.num_samples
    assert K == 9 * graph.grid_count
    assert res.solve_count == 9 == -(-K // graph.grid_count)
    assert np.array_equal(res.solve_samples, np.arange(9) * graph.grid_count)


def test_rollout_matches_manual_propagation():
    config, graph = default_setup(num_domains=6)
    disc = lip.discretize_zoh(PARAMS)
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    res = rollout_closed_loop(config, graph, PARAMS, x0, 3, disc)
    x = x0.copy()
    for k in range(res.num_samples):
        x = lip.lip_step(disc, x, res.cops[k])
        assert np.array_equal(x, res.states[k + 1])


def test_downsample_map_matches_rollout():
    config, graph = default_setup(num_domains=6)
    disc = lip.discretize_zoh(PARAMS)
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    res = rollout_closed_loop(config, graph, PARAMS, x0, 2, disc)
    x1 = downsample_map(config, graph, PARAMS, 0, x0, disc)
    assert np.array_equal(x1, res.event_states(graph.grid_count)[1])


def test_rollout_converges_small_graph():
    config, graph = default_setup(num_domains=6)
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    res = rollout_closed_loop(config, graph, PARAMS, x0, 6 + 10)
    assert res.errors()[-1] < 1e-3


def test_bundle_delegates_and_caches():
    config, graph = default_setup(num_domains=6)
    ctrl = EventMpc(config, graph, PARAMS)
    assert np.allclose(ctrl.disc.A, lip.discretize_zoh(PARAMS).A)
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    sol, law = ctrl.solve(x0, 0)
    assert law.controls.shape == (graph.grid_count, 2)
    assert np.array_equal(ctrl.downsample(0, x0),
                          downsample_map(config, graph, PARAMS, 0, x0))


# ------------------------------------------------------------- validation

def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(horizon=0)
    with pytest.raises(ValueError):
        MpcConfig(lambda_weight=0.0)
    bad = np.eye(4)
    bad[0, 1] = 0.5  # not symmetric
    with pytest.raises(ValueError):
        MpcConfig(state_weight=bad).Q()
    with pytest.raises(ValueError):
        MpcConfig(state_weight=-1.0).Q()


def test_weight_matrices_accept_full_matrices():
    Q = np.diag([2.0, 1.0, 2.0, 1.0])
    assert np.array_equal(MpcConfig(state_weight=Q).Q(), Q)


def test_rollout_rejects_bad_counts():
    config, graph = default_setup(num_domains=4)
    x0 = lip.equilibrium_state(graph.domains[0].centroid())
    with pytest.raises(ValueError):
        rollout_closed_loop(config, graph, PARAMS, x0, 0)
    short = MpcConfig(horizon=2)
    with pytest.raises(ValueError):
        rollout_closed_loop(short, graph, PARAMS, x0, 1)
