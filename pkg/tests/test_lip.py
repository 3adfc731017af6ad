"""Template-model tests: ZOH discretization against a matrix-exponential
oracle, frozen digits for the default parameters, and pyramid/halfspace
equivalence."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from quadsteer import lip

# frozen from the closed forms at the default parameters
# (T = 0.08 s, r_z = 0.5 m, g = 9.81): omega = sqrt(g/r_z)
OMEGA_DEFAULT = 4.4294469180700204
A11_DEFAULT = 1.063443727771561       # cosh(omega T)
A12_DEFAULT = 0.08168478302981294     # sinh(omega T)/omega
B1_DEFAULT = -0.06344372777156093     # 1 - cosh(omega T)
ETA_DEFAULT = 0.1414213562373095      # mu r_z / sqrt(2) -> |r - u| bound


def zoh_oracle(params: lip.LipParams, T: float):
    """Independent discretization through the augmented matrix exponential."""
    w2 = params.gravity / params.com_height
    Ax = np.array([[0.0, 1.0], [w2, 0.0]])
    Bx = np.array([0.0, -w2])
    M = np.zeros((3, 3))
    M[:2, :2] = Ax
    M[:2, 2] = Bx
    E = expm(M * T)
    A = np.zeros((4, 4))
    B = np.zeros((4, 2))
    A[:2, :2] = E[:2, :2]
    A[2:, 2:] = E[:2, :2]
    B[:2, 0] = E[:2, 2]
    B[2:, 1] = E[:2, 2]
    return A, B


def test_default_discretization_frozen_digits():
    d = lip.discretize_zoh(lip.LipParams())
    assert d.A[0, 0] == pytest.approx(A11_DEFAULT, abs=1e-15)
    assert d.A[0, 1] == pytest.approx(A12_DEFAULT, abs=1e-15)
    assert d.A[1, 1] == pytest.approx(A11_DEFAULT, abs=1e-15)
    assert d.B[0, 0] == pytest.approx(B1_DEFAULT, abs=1e-15)


def test_zoh_matches_expm_oracle_on_grid():
    for rz in (0.3, 0.5, 0.8, 1.2):
        for g in (9.0, 9.81, 10.5):
            for T in (0.02, 0.08, 0.2, 0.5):
                p = lip.LipParams(com_height=rz, gravity=g, sample_time=T)
                d = lip.discretize_zoh(p)
                A, B = zoh_oracle(p, T)
                assert np.abs(d.A - A).max() < 1e-10, (rz, g, T)
                assert np.abs(d.B - B).max() < 1e-10, (rz, g, T)


def test_axis_blocks_decouple_and_match():
    d = lip.discretize_zoh(lip.LipParams())
    assert np.all(d.A[:2, 2:] == 0.0) and np.all(d.A[2:, :2] == 0.0)
    assert np.abs(d.A[:2, :2] - d.A[2:, 2:]).max() == 0.0
    assert np.all(d.B[:2, 1] == 0.0) and np.all(d.B[2:, 0] == 0.0)
    assert np.abs(d.B[:2, 0] - d.B[2:, 1]).max() == 0.0


@given(rz=st.floats(0.2, 2.0), g=st.floats(8.0, 12.0), T=st.floats(0.01, 0.6))
def test_block_determinant_is_one(rz, g, T):
    # cosh^2 - sinh^2 = 1: the x-block of the flow map has unit determinant
    d = lip.discretize_zoh(lip.LipParams(com_height=rz, gravity=g, sample_time=T))
    blk = d.A[:2, :2]
    assert abs(np.linalg.det(blk) - 1.0) < 1e-10


def test_equilibrium_is_fixed_point():
    p = lip.LipParams()
    d = lip.discretize_zoh(p)
    u = np.array([0.3, -0.2])
    x = lip.equilibrium_state(u)
    assert np.abs(lip.lip_step(d, x, u) - x).max() < 1e-14


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_equilibrium_state_layout(ux, uy):
    x = lip.equilibrium_state((ux, uy))
    assert x.shape == (4,)
    assert x[0] == ux and x[2] == uy and x[1] == 0.0 and x[3] == 0.0


def test_net_force_vertical_component_is_weight():
    p = lip.LipParams()
    F = lip.net_force(p, [0.31, 0.0, -0.2, 0.0], [0.3, -0.2])
    assert F[2] == pytest.approx(p.total_mass * p.gravity, rel=1e-15)
    # tangential: m * (g / r_z) * (r - u)
    assert F[0] == pytest.approx(32.0 * (9.81 / 0.5) * 0.01, rel=1e-12)
    assert F[1] == 0.0


def test_cone_halfspaces_frozen():
    Phi, Psi, eta = lip.cone_halfspaces(lip.LipParams())
    assert Phi.shape == (4, 4) and Psi.shape == (4, 2)
    assert np.abs(eta - ETA_DEFAULT).max() < 1e-15
    # rows read |r_x - u_x| <= eta, |r_y - u_y| <= eta
    assert np.all(Phi[:, [1, 3]] == 0.0)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0),
       st.floats(-1.0, 1.0), st.floats(-1.0, 1.0),
       st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))
def test_halfspaces_iff_pyramid(rx, vx, ry, vy, ux, uy):
    """Phi x + Psi u <= eta exactly when the implied net force is in the
    (closed) inner pyramid."""
    p = lip.LipParams()
    Phi, Psi, eta = lip.cone_halfspaces(p)
    x = np.array([rx, vx, ry, vy])
    u = np.array([ux, uy])
    lhs_ok = bool(np.all(Phi @ x + Psi @ u <= eta + 1e-12))
    F = lip.net_force(p, x, u)
    assert lhs_ok == lip.in_friction_pyramid(p, F, tol=1e-9)


def test_lip_step_matches_continuous_flow():
    """Integrate the ODE with fine RK4 and compare one ZOH step."""
    p = lip.LipParams()
    d = lip.discretize_zoh(p)
    w2 = p.gravity / p.com_height
    u = np.array([0.05, -0.02])

    def f(x):
        return np.array([x[1], w2 * (x[0] - u[0]), x[3], w2 * (x[2] - u[1])])

    x = np.array([0.1, -0.3, 0.02, 0.4])
    fine = x.copy()
    n, h = 4000, p.sample_time / 4000
    for _ in range(n):
        k1 = f(fine)
        k2 = f(fine + 0.5 * h * k1)
        k3 = f(fine + 0.5 * h * k2)
        k4 = f(fine + h * k3)
        fine = fine + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    assert np.abs(lip.lip_step(d, x, u) - fine).max() < 1e-12


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        lip.LipParams(com_height=0.0)
    with pytest.raises(ValueError):
        lip.LipParams(gravity=-1.0)
    with pytest.raises(ValueError):
        lip.LipParams(sample_time=0.0)
    with pytest.raises(ValueError):
        lip.LipParams(friction_coeff=0.0)
