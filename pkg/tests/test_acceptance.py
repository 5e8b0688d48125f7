"""Acceptance criteria 1-8, each at its stated tolerance.

Every test attaches its measured quantities as a ``detail`` property; the
conftest hook prints one PASS/FAIL line per criterion at the end of the run.
"""
import time

import numpy as np
import pytest

from phnet.boundary import MAXIMAL, MatrixForm, check_wb_maccretive, contraction_to_wb, factor_wb
from phnet.discretize import assemble_operator, build_grid, reference_network_for, resolvent_norm
from phnet.errors import NotCertifiedError
from phnet.evolve import (ControlSignal, EvoProblem, certify_positivity, continuity_modulus, prepare,
                          simulate, simulate_physical, solve_boundary_control, transport_cfl,
                          weighted_norm, weighted_time_norm)
from phnet.network import HamiltonianField, Interval, NetworkSpec
from phnet.transform import boundary_matrix_c, build_congruence

UNIT = NetworkSpec((Interval(0.0, 1.0),))


def note(request, text):
    request.node.user_properties.append(("detail", text))


def random_p1(rng, N, gap=0.1):
    while True:
        A = rng.standard_normal((N, N))
        P = A + A.T
        if np.abs(np.linalg.eigvalsh(P)).min() > gap:
            return P


def random_contraction(rng, N, norm):
    A = rng.standard_normal((N, N))
    return A * (norm / np.linalg.norm(A, 2))


def c_matrix(P1, a=0.0, b=1.0):
    N = P1.shape[0]
    return boundary_matrix_c(build_congruence(NetworkSpec((Interval(a, b),) * N), P1), P1).C


def bump(x, c, w):
    return np.where(np.abs(x - c) < w / 2, np.sin(np.pi * (x - c + w / 2) / w) ** 2, 0.0)


def test_criterion_1_boundary_matrix_identity(request):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        N = int(rng.integers(1, 5))
        P1 = random_p1(rng, N)
        C = c_matrix(P1, 0.0, rng.uniform(0.5, 3.0))
        Z = np.zeros((N, N))
        lhs = C.T @ np.block([[P1, Z], [Z, -P1]]) @ C
        rhs = np.block([[np.eye(N), Z], [Z, -np.eye(N)]])
        worst = max(worst, np.abs(lhs - rhs).max())
    elapsed = time.perf_counter() - t0
    note(request, f"max residual {worst:.2e}, {elapsed:.2f} s")
    assert worst <= 1e-10
    assert elapsed < 5.0


def test_criterion_2_factorization_identity(request):
    rng = np.random.default_rng(202)
    worst_res, worst_norm = 0.0, 0.0
    for _ in range(100):
        N = int(rng.integers(1, 5))
        P1 = random_p1(rng, N)
        C = c_matrix(P1)
        L0 = rng.standard_normal((N, N)) + 2 * np.eye(N)
        W = L0 @ contraction_to_wb(random_contraction(rng, N, rng.uniform(0, 1)), C)
        assert check_wb_maccretive(W, P1, C).verdict == MAXIMAL
        L, M = factor_wb(W, C)
        worst_res = max(worst_res, np.abs(W @ C - L @ np.hstack([M, np.eye(N)])).max())
        worst_norm = max(worst_norm, np.linalg.norm(M, 2))
    note(request, f"max residual {worst_res:.2e}, max sigma(M) {worst_norm:.6f}")
    assert worst_res <= 1e-10
    assert worst_norm <= 1 + 1e-10


def test_criterion_3_equivalent_characterizations(request):
    rng = np.random.default_rng(303)
    agree, verdicts, mismatches = 0, {}, []
    for i in range(200):
        N = int(rng.integers(1, 5))
        P1 = random_p1(rng, N)
        C = c_matrix(P1)
        if i % 2 == 0:
            L0 = rng.standard_normal((N, N)) + 2 * np.eye(N)
            W = L0 @ contraction_to_wb(random_contraction(rng, N, rng.uniform(0, 1)), C)
        else:
            W = rng.standard_normal((N, 2 * N))
        cert = check_wb_maccretive(W, P1, C)
        verdicts[cert.verdict] = verdicts.get(cert.verdict, 0) + 1
        psd = cert.verdict == MAXIMAL
        try:
            factor_wb(W, C)
            fact = True
        except NotCertifiedError:
            fact = False
        try:
            _, M = factor_wb(W, C, require_contraction=False)
        except NotCertifiedError:
            res = False  # K2 singular: no well-posed discrete problem to test
        else:
            g = build_grid(reference_network_for((N, 0, 0)), 1e-3)
            res = resolvent_norm(assemble_operator(g, M, check=False)) <= 1 + 1e-8
        if psd == fact == res:
            agree += 1
        else:
            mismatches.append((psd, fact, res))
    kinds = sorted(set(mismatches))
    note(request, f"agreement {agree}/200, verdicts {verdicts}, mismatch patterns (psd, factor, resolvent) {kinds}")
    assert len(verdicts) > 1
    assert agree == 200


def test_criterion_4_contraction_semigroup(request):
    h = 1e-3
    g = build_grid(reference_network_for((1, 0, 0)), h)
    op = assemble_operator(g, [[0.0]])
    z0 = bump(g.centers, -0.25, 0.4)
    zs = transport_cfl(op, z0, 200)
    shift = max(np.abs(zs[n][1:] - zs[n - 1][:-1]).max() for n in range(1, 201))

    traj = simulate(EvoProblem(UNIT, [[1.0]], [[0.0]], T=1.0, dt=h, h=h), lambda k, x: bump(x, 0.3, 0.4))
    slack = float(np.diff(traj.energy).max())

    cons = simulate(EvoProblem(UNIT, [[1.0]], [[-1.0]], T=2.0, dt=h, h=h),
                    lambda k, x: 1 + 0.5 * np.cos(2 * np.pi * x))
    drift = abs(cons.energy[-1] - cons.energy[0]) / cons.energy[0]
    note(request, f"shift error {shift:.1e}, max energy increase {slack:.1e}, unitary drift {100 * drift:.2f}%")
    assert shift <= 1e-12
    assert slack <= 1e-12
    assert drift <= 0.02


def test_criterion_5_congruence_equivalence(request):
    rng = np.random.default_rng(7)
    N, a, b = 3, 0.2, 1.4
    P1 = random_p1(rng, N, gap=0.3)
    net = NetworkSpec((Interval(a, b),) * N)
    C = c_matrix(P1, a, b)
    W = (rng.standard_normal((N, N)) + 3 * np.eye(N)) @ contraction_to_wb(random_contraction(rng, N, 0.9), C)
    vals = []
    for _ in range(3):
        B = rng.standard_normal((N, N))
        vals.append(B @ B.T + np.eye(N))
    H = HamiltonianField.piecewise_constant(a + (b - a) * np.array([17, 33]) / 50, vals)
    P0 = rng.standard_normal((N, N))
    P0 = P0 - P0.T
    mid, r = (a + b) / 2, (b - a) / 4
    w0 = lambda k, x: (k + 1) * np.where(np.abs(x - mid) < r, np.cos(np.pi * (x - mid) / (2 * r)) ** 4, 0.0)  # noqa
    errs = []
    for h in (4e-3, 2e-3, 1e-3):
        problem = EvoProblem(net, P1, MatrixForm(W), H=H, P0=P0, T=0.5, dt=h, h=h)
        ref, phys = simulate(problem, w0), simulate_physical(problem, w0)
        d = ref.values[-1] - phys.values[-1]
        errs.append(float(np.sqrt(np.sum(ref.grid.weights * d * d))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    note(request, f"errors {[f'{e:.3e}' for e in errs]}, orders {np.round(orders, 3).tolist()}")
    assert errs[-1] < errs[0]
    assert orders.min() >= 0.9


def test_criterion_6_dae_solvability(request):
    net = NetworkSpec((Interval(0.0, 1.0),) * 2)
    P1 = np.array([[1.0, 0.5], [0.5, -1.0]])
    C = c_matrix(P1)
    W = contraction_to_wb(random_contraction(np.random.default_rng(3), 2, 0.8), C)
    M0, M1 = np.diag([1.0, 0.0]), np.array([[-0.5, 1.0], [-1.0, 0.5]])
    ok, c = certify_positivity(M0, M1, 1.0)
    assert ok and c >= 0.5 - 1e-12

    def f(k, x, t):
        return np.sin(np.pi * (k + 1) * x) * np.cos(3 * t) + 0.5 * (k == 1) * np.exp(-t)

    h = 1e-3
    problem = EvoProblem(net, P1, MatrixForm(W), M0=M0, M1=M1, rho0=1.0, T=2.0, dt=h, h=h, forcing=f)
    disc = prepare(problem)
    traj = simulate(problem, disc=disc)
    assert np.all(np.isfinite(traj.values))
    F = np.array([disc.phys_grid.sample(lambda k, x: f(k, x, t)).values for t in traj.times])
    x_norm = weighted_norm(traj, disc.rho)
    f_norm = weighted_time_norm(traj.times, F ** 2 @ traj.grid.weights, disc.rho)
    ratio = x_norm / f_norm
    note(request, f"c = {disc.c:.3f}, ratio {ratio:.4f} <= {1.1 / c:.2f} (square-root ratio {np.sqrt(ratio):.4f})")
    assert ratio <= (1 / c) * 1.1


def test_criterion_7_boundary_control(request):
    g_val = 0.8
    errs = []
    for h in (4e-3, 2e-3, 1e-3):
        problem = EvoProblem(UNIT, [[1.0]], MatrixForm([[0.0, 1.0]]), W_C=[[1.0, 0.0]], T=2.0, dt=h, h=h,
                             control=ControlSignal.constant([g_val]))
        errs.append(float(np.abs(solve_boundary_control(problem).final.values - g_val).max()))
    fill = max(e / h for e, h in zip(errs, (4e-3, 2e-3, 1e-3)))

    net = NetworkSpec((Interval(0.0, 1.0),) * 2)
    problem = EvoProblem(net, [[1.0, 0.5], [0.5, -1.0]], MatrixForm([[0, 0, 1.0, 0], [0, 1.0, 0, 0]]),
                         W_C=np.eye(2, 4, 2), T=1.0, dt=2e-3, h=2e-3)
    u = ControlSignal.sinusoid([1.0, -0.5], [1.0, 2.0])
    disc = prepare(problem)
    one = solve_boundary_control(problem, u, disc=disc)
    two = solve_boundary_control(problem, u.scaled(2.0), disc=disc)
    lin = float(np.abs(two.values - 2 * one.values).max() / np.abs(one.values).max())

    scalar = EvoProblem(UNIT, [[1.0]], MatrixForm([[0.0, 1.0]]), T=1.0, dt=5e-3)
    mods = [continuity_modulus(scalar, trials=3, seed=5, h=h) for h in (4e-3, 2e-3, 1e-3)]
    spread = max(mods) / min(mods)
    note(request, f"max |x(T)-g|/h {fill:.3f}, linearity {lin:.1e}, modulus spread {spread:.3f}")
    assert fill <= 10.0
    assert lin <= 1e-10
    assert spread <= 2.0


def test_criterion_8_adjoint_structure(request):
    rng = np.random.default_rng(808)
    counts = (2, 1, 1)
    n, mp, mm = counts
    A = rng.standard_normal((n + mp, n + mm))
    M = A / np.linalg.norm(A, 2)
    out = rng.standard_normal(n + mm)
    inc = -M @ out
    cs = []
    for h in (4e-3, 2e-3, 1e-3):
        g = build_grid(reference_network_for(counts), h, T=0.5)
        vals = []
        for k, ch in enumerate(g.channels):
            x = ch.centers
            if k < n:
                vals.append(out[k] * (x + 0.5) + inc[k] * (0.5 - x) + 0.4 * np.sin(np.pi * (x + 0.5)) * np.cos(x))
            elif k < n + mp:
                vals.append(inc[k] * np.exp(-3 * (x + 0.5)))
            else:
                vals.append(out[k - mp] * np.exp(3 * (x - 0.5)))
        u = np.concatenate(vals)
        op = assemble_operator(g, M)
        res = abs(2 * op.inner(op.matrix @ u, u) - (out @ out - inc @ inc))
        cs.append(float(res / h))
    spread = (max(cs) - min(cs)) / np.mean(cs)
    note(request, f"C_h {[round(c, 4) for c in cs]}, spread {100 * spread:.1f}%")
    assert spread <= 0.10
