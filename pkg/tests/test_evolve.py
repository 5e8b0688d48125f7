import numpy as np
import pytest

from phnet.boundary import MatrixForm
from phnet.discretize import assemble_operator, build_grid, reference_network_for
from phnet.errors import NotCertifiedError
from phnet.evolve import (ControlSignal, EvoProblem, certify_positivity, continuity_modulus, lift_control,
                          prepare, simulate, simulate_physical, solve_boundary_control, step,
                          transport_cfl, weighted_norm, weighted_time_norm)
from phnet.grid import ChannelGrid, Grid
from phnet.network import HamiltonianField, Interval, NetworkSpec

UNIT = NetworkSpec((Interval(0.0, 1.0),))


def bump(x, c, w):
    return np.where(np.abs(x - c) < w / 2, np.sin(np.pi * (x - c + w / 2) / w) ** 2, 0.0)


@pytest.mark.parametrize("M0,M1,rho,c", [
    (np.eye(2), np.zeros((2, 2)), 1.0, 1.0),
    (np.zeros((2, 2)), np.eye(2), 7.0, 1.0),
    (np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), 2.0, 1.0),
])
def test_certify_positivity(M0, M1, rho, c):
    ok, val = certify_positivity(M0, M1, rho)
    assert ok
    assert val == pytest.approx(c)


def test_certify_positivity_fails():
    assert not certify_positivity(np.diag([1.0, 0.0]), np.zeros((2, 2)), 1.0)[0]


def test_lift_control():
    g = Grid((ChannelGrid("bounded", np.linspace(0, 1, 11)),))
    iv = Interval(0.0, 1.0)
    np.testing.assert_allclose(lift_control([1.0, 1.0], g, iv).values, 1.0)
    np.testing.assert_allclose(lift_control([1.0, 0.0], g, iv).values, g.centers)
    np.testing.assert_array_equal(lift_control([0.0, 0.0], g, iv).values, 0.0)


def test_lift_traces_exact():
    iv = Interval(2.0, 3.5)
    g = Grid((ChannelGrid("bounded", np.array([2.0, 3.5])),) * 2)
    v = np.array([0.3, -1.0, 2.0, 0.5])
    # on the interval ends the affine lift reproduces v
    xs = np.array([iv.b, iv.a])
    for k in range(2):
        vals = ((xs - iv.a) * v[k] + (iv.b - xs) * v[2 + k]) / iv.length
        np.testing.assert_allclose(vals, [v[k], v[2 + k]])
    assert lift_control(v, g, iv).values.shape == (2,)


def _periodic(M0=None, M1=None, dt=0.1, T=1.0, forcing=None):
    return EvoProblem(UNIT, [[1.0]], [[-1.0]], M0=M0, M1=M1, dt=dt, T=T, h=0.05, forcing=forcing)


def test_step_scalar_decay():
    # constants lie in the kernel of the periodic upwind operator
    lam, dt = 0.7, 0.1
    disc = prepare(_periodic(M1=[[lam]], dt=dt))
    z = np.ones(disc.ref_grid.size)
    for n in range(5):
        z = step(disc, z, (n + 1) * dt)
    np.testing.assert_allclose(z, (1 / (1 + lam * dt)) ** 5, rtol=1e-12)


def test_step_algebraic():
    disc = prepare(_periodic(M0=[[0.0]], M1=[[1.0]], forcing=lambda k, x, t: 2.5 * np.ones_like(x)))
    z = step(disc, np.zeros(disc.ref_grid.size), 0.1, forcing=disc.sample_forcing(0.1))
    np.testing.assert_allclose(z, 2.5, rtol=1e-12)


def test_zero_data_zero_trajectory():
    traj = simulate(EvoProblem(UNIT, [[1.0]], [[0.0]], T=0.2, dt=0.01, h=0.02))
    assert np.all(traj.values == 0.0)
    assert np.all(traj.energy == 0.0)


def test_bump_leaves_interval():
    problem = EvoProblem(UNIT, [[1.0]], [[0.0]], T=1.0, dt=1e-3, h=1e-3)
    traj = simulate(problem, lambda k, x: bump(x, 0.125, 0.25))
    assert traj.energy[0] > 0.09
    assert np.sqrt(traj.energy[-1]) <= 0.05
    assert np.all(np.diff(traj.energy) <= 1e-14)


def test_cfl_exact_shift():
    g = build_grid(reference_network_for((1, 0, 0)), 0.01)
    op = assemble_operator(g, [[0.0]])
    z0 = bump(g.centers, -0.3, 0.3)
    zs = transport_cfl(op, z0, 40)
    for n in (1, 17, 40):
        np.testing.assert_allclose(zs[n][n:], z0[:-n], atol=1e-12)
        np.testing.assert_allclose(zs[n][:n], 0.0, atol=1e-12)


def test_conservative_energy():
    problem = EvoProblem(UNIT, [[1.0]], [[-1.0]], T=2.0, dt=1e-3, h=1e-3)
    traj = simulate(problem, lambda k, x: 1 + 0.5 * np.cos(2 * np.pi * x))
    drift = abs(traj.energy[-1] - traj.energy[0]) / traj.energy[0]
    assert drift <= 0.02


def test_dissipation_with_hamiltonian_and_p0():
    net = NetworkSpec((Interval(0.0, 1.0),) * 2)
    H = HamiltonianField.piecewise_constant([0.4], [np.diag([2.0, 1.0]), [[1.0, 0.3], [0.3, 1.5]]])
    problem = EvoProblem(net, [[1.0, 0.4], [0.4, -0.8]], np.array([[0.3, -0.4], [0.2, 0.5]]), H=H,
                         P0=[[0.0, 1.0], [-1.0, 0.0]], T=0.5, dt=2e-3, h=1e-2)
    traj = simulate(problem, lambda k, x: bump(x, 0.5, 0.5) * (1 + k))
    assert np.all(np.diff(traj.energy) <= 1e-12 * traj.energy[0])
    assert traj.energy[-1] < traj.energy[0]


def test_not_certified():
    with pytest.raises(NotCertifiedError):
        prepare(EvoProblem(UNIT, [[1.0]], MatrixForm([[1.0, 0.0]])))
    with pytest.raises(NotCertifiedError):
        prepare(EvoProblem(UNIT, [[1.0]], [[1.5]]))
    with pytest.raises(NotCertifiedError):
        prepare(EvoProblem(UNIT, [[1.0]], [[0.0]], M0=[[0.0]], M1=[[0.0]]))


def test_initial_data_violating_bc_warns():
    problem = EvoProblem(UNIT, [[1.0]], MatrixForm([[0.0, 1.0]]), T=0.01, dt=0.01, h=0.1)
    with pytest.warns(UserWarning, match="boundary condition"):
        simulate(problem, lambda k, x: np.ones_like(x))


def test_dae_runs():
    net = NetworkSpec((Interval(0.0, 1.0),) * 2)
    problem = EvoProblem(net, [[1.0, 0.5], [0.5, -1.0]], MatrixForm([[0, 0, 1.0, 0], [0, 1.0, 0, 0]]),
                         M0=np.diag([1.0, 0.0]), M1=[[-0.5, 1.0], [-1.0, 0.5]], T=0.2, dt=1e-2, h=1e-2,
                         forcing=lambda k, x, t: np.sin(np.pi * x) * (k + 1))
    traj = simulate(problem)
    assert np.all(np.isfinite(traj.values))
    assert traj.meta["c"] == pytest.approx(0.5)


def test_control_fills_channel():
    g = 0.7
    problem = EvoProblem(UNIT, [[1.0]], MatrixForm([[0.0, 1.0]]), W_C=[[1.0, 0.0]], T=2.0, dt=2e-3, h=2e-3,
                         control=ControlSignal.constant([g]))
    traj = solve_boundary_control(problem)
    assert np.abs(traj.final.values - g).max() <= 10 * 2e-3
    assert traj.observations[-1, 0] == pytest.approx(g, abs=1e-2)
    np.testing.assert_allclose(traj.controls[:, 0], g)


def test_zero_control_zero_trajectory():
    problem = EvoProblem(UNIT, [[1.0]], MatrixForm([[0.0, 1.0]]), W_C=[[1.0, 0.0]], T=0.2, dt=1e-2, h=1e-2)
    traj = solve_boundary_control(problem, ControlSignal.zero(1))
    assert np.all(traj.values == 0.0)
    assert np.all(traj.observations == 0.0)


def test_control_linearity():
    net = NetworkSpec((Interval(0.0, 1.0),) * 2)
    problem = EvoProblem(net, [[1.0, 0.5], [0.5, -1.0]], MatrixForm([[0, 0, 1.0, 0], [0, 1.0, 0, 0]]),
                         T=0.5, dt=5e-3, h=1e-2)
    u = ControlSignal.sinusoid([1.0, -0.5], [1.0, 2.0])
    disc = prepare(problem)
    one = solve_boundary_control(problem, u, disc=disc)
    two = solve_boundary_control(problem, u.scaled(2.0), disc=disc)
    rel = np.abs(two.values - 2 * one.values).max() / np.abs(one.values).max()
    assert rel <= 1e-10


def test_weighted_norm_examples():
    t = np.linspace(0, 1, 2001)
    assert weighted_time_norm(t, np.ones_like(t), 1.0) == pytest.approx((1 - np.exp(-2)) / 2, rel=1e-6)
    assert weighted_time_norm(t, np.zeros_like(t), 1.0) == 0.0
    problem = EvoProblem(UNIT, [[1.0]], [[-1.0]], T=0.5, dt=1e-2, h=1e-2)
    traj = simulate(problem, lambda k, x: np.cos(2 * np.pi * x))
    scaled = simulate(problem, lambda k, x: 3 * np.cos(2 * np.pi * x))
    assert weighted_norm(scaled, 1.0) == pytest.approx(9 * weighted_norm(traj, 1.0), rel=1e-12)


def test_continuity_modulus_refinement():
    problem = EvoProblem(UNIT, [[1.0]], MatrixForm([[0.0, 1.0]]), T=1.0, dt=5e-3)
    mods = [continuity_modulus(problem, trials=3, seed=1, h=h) for h in (4e-2, 2e-2, 1e-2)]
    assert all(np.isfinite(mods)) and min(mods) > 0
    for a, b in zip(mods[:-1], mods[1:]):
        assert 0.5 <= a / b <= 2.0


def test_physical_solver_matches_transform_scalar():
    # P1 = -2 on ]0,2[: the transform rescales and reflects; both solvers see the same problem
    net = NetworkSpec((Interval(0.0, 2.0),))
    problem = EvoProblem(net, [[-2.0]], MatrixForm([[1.0, 0.0]]), T=0.3, dt=1e-3, h=2.5e-3)
    w0 = lambda k, x: bump(x, 1.2, 0.6)  # noqa: E731
    a = simulate(problem, w0)
    b = simulate_physical(problem, w0)
    diff = np.sqrt(np.sum(a.grid.weights * (a.values[-1] - b.values[-1]) ** 2))
    assert diff <= 0.02 * np.sqrt(a.energy[0])
