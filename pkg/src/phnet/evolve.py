"""Time integration of (differential-algebraic) port-Hamiltonian systems.

The unknown is the co-energy variable ``w = H x``, which solves

    (d/dt M0 + M1 + P1 d/dx) w = F,   boundary condition on the traces of w,

with the defaults ``M0 = H^-1`` and ``M1 = P0``.  The problem is moved to the
reference network with the congruence ``V`` (``w = V* zeta``), discretised with
the upwind operator and stepped with implicit Euler.  Boundary controls are
handled by lifting the boundary data with an affine function and solving for the
remainder with homogeneous boundary conditions.
"""
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import (ContractionForm, MatrixForm, check_m_form, check_wb_maccretive)
from .discretize import assemble_operator, build_grid
from .errors import (BoundaryConditionError, DimensionError, NotCertifiedError, SolverError)
from .grid import GridFunction
from .network import HamiltonianField, PointwiseField, as_field, grid_classes, multiplication_matrix
from .transform import V_matrix, boundary_matrix_c, build_congruence, physical_grid


# ---------------------------------------------------------------------------
# control signals


class ControlSignal:
    """A vector-valued signal ``t -> u(t)``; ``u(t)`` has shape ``(N,)``."""

    def __init__(self, func, N, spec=None):
        self._func = func
        self.N = N
        self.spec = spec or {"type": "callable"}

    def __call__(self, t):
        v = np.asarray(self._func(float(t)), dtype=float).reshape(-1)
        if v.size == 1 and self.N > 1:
            v = np.full(self.N, v[0])
        if v.shape != (self.N,):
            raise DimensionError(f"control returned shape {v.shape}, expected ({self.N},)")
        return v

    def sample(self, times):
        return np.array([self(t) for t in times])

    def derivative(self, t, delta):
        """Central difference of the signal."""
        return (self(t + delta) - self(t - delta)) / (2 * delta)

    def scaled(self, alpha):
        spec = dict(self.spec, scale=alpha * self.spec.get("scale", 1.0))
        return ControlSignal(lambda t: alpha * self._func(t), self.N, spec)

    @classmethod
    def constant(cls, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(lambda t: value, value.size, {"type": "constant", "value": value.tolist()})

    @classmethod
    def zero(cls, N):
        return cls.constant(np.zeros(N))

    @classmethod
    def piecewise_linear(cls, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or values.shape[0] != times.size:
            raise DimensionError("piecewise-linear control needs one value row per time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("control times must be strictly increasing")

        def f(t):
            return np.array([np.interp(t, times, values[:, k]) for k in range(values.shape[1])])

        return cls(f, values.shape[1], {"type": "piecewise_linear"})

    @classmethod
    def sinusoid(cls, amplitude, frequency, phase=0.0, offset=0.0):
        amp, freq, ph, off = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float))
                                                    for a in (amplitude, frequency, phase, offset)))
        return cls(lambda t: off + amp * np.sin(2 * np.pi * freq * t + ph), amp.size,
                   {"type": "sinusoid"})


# ---------------------------------------------------------------------------
# problem description


@dataclass
class EvoProblem:
    """A port-Hamiltonian evolution problem on an interval network.

    ``bc`` is a :class:`MatrixForm` (``N`` copies of one bounded interval) or a
    contraction matrix for the reference network.  ``M0``/``M1`` default to
    ``H^-1`` and ``P0``.  ``forcing(k, x, t)`` gives the right-hand side on
    physical channel ``k``.
    """

    net: object
    P1: np.ndarray
    bc: object
    H: Optional[HamiltonianField] = None
    P0: Optional[np.ndarray] = None
    M0: object = None
    M1: object = None
    rho0: float = 1.0
    T: float = 1.0
    dt: float = 1e-3
    h: float = 1e-2
    W_C: Optional[np.ndarray] = None
    control: Optional[ControlSignal] = None
    forcing: Optional[Callable] = None

    def __post_init__(self):
        N = self.net.N
        self.P1 = np.array(self.P1, dtype=float, ndmin=2)
        if self.H is None:
            self.H = HamiltonianField.identity(N)
        if self.P0 is None:
            self.P0 = np.zeros((N, N))
        self.P0 = np.array(self.P0, dtype=float, ndmin=2)
        if self.P0.shape != (N, N):
            raise DimensionError("P0 must be N x N")
        if self.W_C is not None:
            self.W_C = np.array(self.W_C, dtype=float, ndmin=2)
            if self.W_C.shape[1] != 2 * N:
                raise DimensionError("W_C must have 2N columns")
        if not self.T > 0 or not self.dt > 0:
            raise ValueError("T and dt must be positive")

    @property
    def N(self):
        return self.net.N

    def m0_field(self):
        return self.H.inverse() if self.M0 is None else as_field(self.M0, self.N)

    def m1_field(self):
        return PointwiseField.constant(self.P0) if self.M1 is None else as_field(self.M1, self.N)


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    grid: object
    energy: np.ndarray
    observations: Optional[np.ndarray] = None
    controls: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.values.shape[0] != self.times.size or self.energy.size != self.times.size:
            raise DimensionError("trajectory arrays have inconsistent lengths")

    def state(self, i):
        return GridFunction(self.grid, self.values[i])

    @property
    def final(self):
        return self.state(-1)

    def sq_norms(self):
        return self.values ** 2 @ self.grid.weights


# ---------------------------------------------------------------------------
# positivity


def certify_positivity(M0, M1, rho, tol=1e-10):
    """``c = lambda_min(rho M0 + sym(M1))``; returns ``(c > tol, c)``."""
    M0 = M0.toarray() if sp.issparse(M0) else np.array(M0, dtype=float, ndmin=2)
    M1 = M1.toarray() if sp.issparse(M1) else np.array(M1, dtype=float, ndmin=2)
    if M0.shape != M1.shape:
        raise DimensionError("M0 and M1 act on different spaces")
    S = rho * M0 + 0.5 * (M1 + M1.T)
    c = float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])
    return c > tol, c


def pointwise_positivity(m0, m1, rho, grid):
    """Smallest eigenvalue of ``rho M0(x) + sym M1(x)`` over the cell centres of ``grid``."""
    c = np.inf
    for group in grid_classes(grid):
        x = grid.channels[group[0]].centers
        A = m0.sample(x)[:, group][:, :, group]
        B = m1.sample(x)[:, group][:, :, group]
        S = rho * A + 0.5 * (B + np.swapaxes(B, 1, 2))
        c = min(c, float(np.linalg.eigvalsh(S).min()))
    return c


def _check_m0(m0, grid, tol=1e-10):
    for group in grid_classes(grid):
        x = grid.channels[group[0]].centers
        A = m0.sample(x)[:, group][:, :, group]
        if np.abs(A - np.swapaxes(A, 1, 2)).max() > tol * max(1.0, np.abs(A).max()):
            raise ValueError("M0 must be symmetric")
        if np.linalg.eigvalsh(A).min() < -tol * max(1.0, np.abs(A).max()):
            raise ValueError("M0 must be positive semidefinite")


# ---------------------------------------------------------------------------
# lifting of boundary data


def lift_control(v, grid, interval):
    """``((x-a) v_b + (b-x) v_a) / (b-a)`` on every channel; ``v = (v_b, v_a)`` in R^{2N}."""
    if interval.kind != "bounded":
        raise DimensionError("the affine lift needs a bounded interval")
    v = np.asarray(v, dtype=float).reshape(-1)
    N = grid.nchannels
    if v.size != 2 * N:
        raise DimensionError(f"boundary vector must have {2 * N} entries")
    a, b = interval.a, interval.b
    return grid.sample(lambda k, x: ((x - a) * v[k] + (b - x) * v[N + k]) / (b - a))


def lift_norm(interval):
    """Operator norm of the affine lift from R^{2N} into L2(]a,b[)^N."""
    return float(np.sqrt(interval.length / 2))


# ---------------------------------------------------------------------------
# discretisation shared by all solvers


@dataclass
class Discretization:
    problem: EvoProblem
    plan: object
    ref_grid: object
    phys_grid: object
    V: sp.csr_matrix
    Vs: sp.csr_matrix
    Vsinv: sp.csr_matrix
    M0t: sp.csr_matrix
    M1t: sp.csr_matrix
    op: object
    Hinv: sp.csr_matrix
    M0p: sp.csr_matrix
    M1p: sp.csr_matrix
    c: float
    rho: float
    M: np.ndarray
    C: Optional[np.ndarray] = None
    L: Optional[np.ndarray] = None
    certificate: object = None
    _lu: object = None
    _lu_dt: float = None

    def energy(self, w):
        return float(np.sum(self.phys_grid.weights * w * (self.Hinv @ w)))

    def system(self, dt):
        return (self.M0t / dt + self.M1t + self.op.matrix).tocsc()

    def factor(self, dt):
        if self._lu is None or self._lu_dt != dt:
            try:
                self._lu = spla.splu(self.system(dt))
            except RuntimeError as exc:
                ok_pos = self.c > 0
                ok_dt = self.problem.rho0 * dt <= 1
                raise SolverError(
                    f"implicit Euler matrix is singular (positivity c={self.c:.3g} "
                    f"{'ok' if ok_pos else 'FAILED'}, rho0*dt={self.problem.rho0 * dt:.3g} "
                    f"{'ok' if ok_dt else 'exceeds 1'}, accretive boundary condition assumed)"
                ) from exc
            self._lu_dt = dt
        return self._lu

    def physical_traces(self, zeta, v=None):
        """``(w(b); w(a))`` of ``w = V* zeta (+ lift of v)`` in the bounded-equal setting."""
        if self.C is None:
            raise DimensionError("physical traces need all channels on one bounded interval")
        out = self.op.out_traces(zeta)
        t = self.C @ np.concatenate([out, -self.M @ out])
        return t if v is None else t + v

    def sample_forcing(self, t):
        f = self.problem.forcing
        if f is None:
            return None
        return self.phys_grid.sample(lambda k, x: f(k, x, t)).values


def _resolve_bc(problem, plan):
    bc = problem.bc
    net = problem.net
    C = L = None
    if isinstance(bc, MatrixForm) or (isinstance(bc, np.ndarray) and net.all_bounded_equal
                                      and np.ndim(bc) == 2 and bc.shape[1] == 2 * net.N
                                      and bc.shape[0] != bc.shape[1]):
        if not net.all_bounded_equal:
            raise DimensionError("W_B conditions need all channels on one bounded interval")
        W = bc.W_B if isinstance(bc, MatrixForm) else bc
        C = boundary_matrix_c(plan, problem.P1).C
        cert = check_wb_maccretive(W, problem.P1, C)
        if not cert.maximal:
            raise NotCertifiedError(f"boundary condition is {cert.verdict}")
        return cert.M, C, cert.L, cert
    M = bc.M if isinstance(bc, ContractionForm) else np.array(bc, dtype=float, ndmin=2)
    n, mp, mm = plan.target_counts
    if M.shape != (n + mp, n + mm):
        raise DimensionError(f"M has shape {M.shape}, the reference network needs {(n + mp, n + mm)}")
    cert = check_m_form(M)
    if not cert.maximal:
        raise NotCertifiedError(f"||M|| > 1: boundary condition is {cert.verdict}")
    if net.all_bounded_equal:
        C = boundary_matrix_c(plan, problem.P1).C
        L = np.eye(net.N)
    return M, C, L, cert


def prepare(problem, h=None, rho=None):
    """Certify the problem and assemble every matrix the steppers need."""
    plan = build_congruence(problem.net, problem.P1)
    M, C, L, cert = _resolve_bc(problem, plan)
    h = problem.h if h is None else h
    rg = build_grid(plan.reference_network(), h, T=problem.T)
    pg = physical_grid(plan, rg)
    m0, m1 = problem.m0_field(), problem.m1_field()
    _check_m0(m0, pg)
    problem.H.check(pg.centers)
    c = pointwise_positivity(m0, m1, problem.rho0, pg)
    if not c > 1e-10:
        raise NotCertifiedError(f"positivity fails: rho0 M0 + sym M1 >= {c:.3g}")
    V = V_matrix(plan, pg, "forward")
    Vs = V_matrix(plan, pg, "adjoint")
    M0p = multiplication_matrix(m0, pg)
    M1p = multiplication_matrix(m1, pg)
    op = assemble_operator(rg, M, counts=plan.target_counts, check=True)
    rho = max(problem.rho0, 1.0 / problem.T) if rho is None else rho
    Vsinv = V_matrix(plan, pg, "adjoint_inverse")
    return Discretization(problem, plan, rg, pg, V, Vs, Vsinv, (V @ M0p @ Vs).tocsr(), (V @ M1p @ Vs).tocsr(),
                          op, multiplication_matrix(problem.H.inverse(), pg), M0p, M1p, c, rho,
                          M, C, L, cert)


# ---------------------------------------------------------------------------
# stepping


def step(disc, zeta, t_next, dt=None, forcing=None, g=None):
    """One implicit Euler step for ``zeta``; ``forcing`` is physical, ``g`` reference inflow data."""
    dt = disc.problem.dt if dt is None else dt
    rhs = disc.M0t @ zeta / dt
    if forcing is not None:
        rhs = rhs + disc.V @ forcing
    if g is not None:
        rhs = rhs + disc.op.inflow @ g
    out = disc.factor(dt).solve(rhs)
    if not np.all(np.isfinite(out)):
        raise SolverError("non-finite values in implicit Euler step")
    return out


def _initial(disc, w0):
    pg = disc.phys_grid
    if w0 is None:
        return pg.zeros().values
    if isinstance(w0, GridFunction):
        if not w0.grid.matches(pg):
            raise DimensionError("initial data lives on a different grid")
        return w0.values
    if callable(w0):
        return pg.sample(w0).values
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (pg.size,):
        raise DimensionError("initial vector has the wrong size")
    return w0


def _check_initial_bc(disc, w0_func, tol=1e-6):
    """Warn when the initial data violate the boundary condition (bounded-equal setting)."""
    net = disc.problem.net
    if disc.C is None or not callable(w0_func):
        return
    iv = net.intervals[0]
    tb = np.array([float(np.squeeze(w0_func(k, np.array([iv.b])))) for k in range(net.N)])
    ta = np.array([float(np.squeeze(w0_func(k, np.array([iv.a])))) for k in range(net.N)])
    s = np.linalg.solve(disc.C, np.concatenate([tb, ta]))
    res = np.abs(disc.M @ s[:net.N] + s[net.N:]).max()
    if res > tol:
        warnings.warn(f"initial data violate the boundary condition (residual {res:.2e}); "
                      "the discrete solution uses the projected inflow values", stacklevel=3)


def simulate(problem, w0=None, disc=None, stride=1):
    """Implicit Euler over ``[0, T]`` for the homogeneous boundary condition.

    ``w0`` is the initial co-energy variable ``H x(0)``: a grid function, a
    callable ``(k, x)`` or a flat vector on the physical grid.
    """
    disc = prepare(problem) if disc is None else disc
    _check_initial_bc(disc, w0)
    dt = problem.dt
    nsteps = int(round(problem.T / dt))
    w = _initial(disc, w0)
    # w = V* zeta, so the initial value is pulled back with (V*)^-1
    zeta = disc.Vsinv @ w
    return _run(disc, zeta, nsteps, dt, stride, lambda z, t: disc.Vs @ z, None)


def _run(disc, zeta, nsteps, dt, stride, to_physical, data):
    """Shared time loop; ``data(t)`` returns (forcing, inflow g, lift values, trace shift, u)."""
    problem = disc.problem
    times, values, energy, obs, ctrl = [], [], [], [], []

    def record(n, z):
        t = n * dt
        extra = data(t) if data is not None else (None, None, None, None, None)
        w = to_physical(z, t)
        if extra[2] is not None:
            w = w + extra[2]
        times.append(t)
        values.append(w)
        energy.append(disc.energy(w))
        if problem.W_C is not None and disc.C is not None:
            obs.append(problem.W_C @ disc.physical_traces(z, extra[3]))
        if extra[4] is not None:
            ctrl.append(extra[4])

    record(0, zeta)
    for n in range(1, nsteps + 1):
        t = n * dt
        if data is not None:
            f, g, _, _, _ = data(t)
        else:
            f, g = disc.sample_forcing(t), None
        zeta = step(disc, zeta, t, dt, f, g)
        if n % stride == 0 or n == nsteps:
            record(n, zeta)
    return Trajectory(np.array(times), np.array(values), disc.phys_grid, np.array(energy),
                      np.array(obs) if obs else None, np.array(ctrl) if ctrl else None,
                      {"dt": dt, "h": disc.ref_grid.channels[0].h, "rho": disc.rho, "c": disc.c})


def solve_boundary_control(problem, u=None, w0=None, disc=None, stride=1):
    """Solve with ``W_B (w(b); w(a)) = u(t)``.

    The data are lifted with ``v(t) = C (0; L^-1 u(t))`` and the affine lift
    ``u~``; the remainder ``z = w - u~`` solves the homogeneous problem with
    forcing ``F - (M0 du~/dt + M1 u~ + P1 du~/dx)``.
    """
    disc = prepare(problem) if disc is None else disc
    if disc.C is None or disc.L is None:
        raise NotCertifiedError("boundary control needs a certified W_B factorisation")
    u = problem.control if u is None else u
    if u is None:
        u = ControlSignal.zero(problem.N)
    if u.N != problem.N:
        raise DimensionError("control dimension differs from N")
    N = problem.N
    iv = problem.net.intervals[0]
    pg = disc.phys_grid
    dt = problem.dt
    Linv = np.linalg.inv(disc.L)
    P1 = problem.P1

    def boundary_vector(values):
        return disc.C @ np.concatenate([np.zeros(N), Linv @ values])

    def data(t):
        ut = u(t)
        v = boundary_vector(ut)
        lift = lift_control(v, pg, iv).values
        dlift = lift_control(boundary_vector(u.derivative(t, dt)), pg, iv).values
        slope = (v[:N] - v[N:]) / iv.length
        dx = pg.sample(lambda k, x: (P1 @ slope)[k] * np.ones_like(x)).values
        f = -(disc.M0p @ dlift + disc.M1p @ lift + dx)
        F = disc.sample_forcing(t)
        if F is not None:
            f = f + F
        return f, None, lift, v, ut

    w = _initial(disc, w0)
    u0_lift = lift_control(boundary_vector(u(0.0)), pg, iv).values
    zeta = disc.Vsinv @ (w - u0_lift)
    nsteps = int(round(problem.T / dt))
    traj = _run(disc, zeta, nsteps, dt, stride, lambda z, t: disc.Vs @ z, data)
    traj.meta["lift_norm"] = lift_norm(iv)
    return traj


# ---------------------------------------------------------------------------
# explicit transport on the CFL line


def transport_cfl(op, zeta0, steps, g=None):
    """Explicit upwind with ``dt = h``: each step is the exact shift by one cell.

    Only meaningful for ``d/dt + d/dx`` on the reference network (``M0 = I``,
    ``M1 = 0``); ``g(n)`` supplies inflow data at step ``n``.
    """
    hs = np.array([c.h for c in op.grid.channels])
    if not np.allclose(hs, hs[0], rtol=1e-14):
        raise ValueError("CFL stepping needs one spacing on all channels")
    h = hs[0]
    out = [np.asarray(zeta0, dtype=float)]
    z = out[0]
    for n in range(1, steps + 1):
        du = op.matrix @ z
        if g is not None:
            du = du - op.inflow @ g(n)
        z = z - h * du
        out.append(z)
    return np.array(out)


# ---------------------------------------------------------------------------
# weighted norms


def weighted_time_norm(times, sq_norms, rho):
    """Trapezoidal quadrature of ``int_0^T s(t) exp(-2 rho t) dt`` for samples ``s`` of ``|x(t)|^2``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    times = np.asarray(times, dtype=float)
    vals = np.asarray(sq_norms, dtype=float) * np.exp(-2 * rho * times)
    return float(np.trapezoid(vals, times)) if hasattr(np, "trapezoid") else float(np.trapz(vals, times))


def weighted_norm(traj, rho):
    """``int_0^T |x(t)|^2 exp(-2 rho t) dt`` (squared weighted L2 norm, zero before t = 0)."""
    return weighted_time_norm(traj.times, traj.sq_norms(), rho)


def random_control(N, T, rng, modes=4):
    """Smooth random signal: a few sinusoids per component."""
    amp = rng.standard_normal((modes, N))
    freq = rng.uniform(0.2, 3.0, (modes, N)) / T
    phase = rng.uniform(0, 2 * np.pi, (modes, N))
    return ControlSignal(lambda t: np.sum(amp * np.sin(2 * np.pi * freq * t + phase), axis=0), N,
                         {"type": "random"})


def continuity_modulus(problem, trials=5, seed=0, h=None):
    """Monte-Carlo estimate of the norm of ``u -> H x`` in exponentially weighted L2 spaces."""
    disc = prepare(problem, h=h)
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, problem.T, int(round(problem.T / problem.dt)) + 1)
    best = 0.0
    for _ in range(trials):
        u = random_control(problem.N, problem.T, rng)
        un = weighted_time_norm(times, np.sum(u.sample(times) ** 2, axis=1), disc.rho)
        if un == 0:
            continue
        u = u.scaled(1.0 / np.sqrt(un))
        traj = solve_boundary_control(problem, u, disc=disc)
        best = max(best, np.sqrt(weighted_norm(traj, disc.rho)))
    return best


# ---------------------------------------------------------------------------
# direct solver on the physical interval


def simulate_physical(problem, w0=None, u=None, h=None):
    """Implicit Euler on nodes of ``[a, b]`` with flux splitting of ``P1``.

    Interior nodes use ``P+ D_- + P- D_+``; at ``a`` only the left-going
    characteristic rows are kept, at ``b`` the right-going ones, and the
    ``N`` rows ``W_B (w(b); w(a)) = u`` close the system.  Results are
    averaged to cell centres of the matching physical grid.
    """
    net = problem.net
    if not net.all_bounded_equal:
        raise DimensionError("the direct solver needs all channels on one bounded interval")
    bc = problem.bc
    W = bc.W_B if isinstance(bc, MatrixForm) else None
    if W is None:
        raise BoundaryConditionError("the direct solver needs a W_B condition")
    disc = prepare(problem, h=h)
    N = net.N
    iv = net.intervals[0]
    J = disc.phys_grid.channels[0].ncells
    hp = iv.length / J
    x = iv.a + hp * np.arange(J + 1)
    K, D1 = disc.plan.K, np.diag(disc.plan.D1)
    Pp = K.T @ np.diag(np.maximum(D1, 0)) @ K
    Pm = K.T @ np.diag(np.minimum(D1, 0)) @ K
    Kp, Km = K[D1 > 0], K[D1 < 0]
    m0, m1 = problem.m0_field(), problem.m1_field()

    def node_avg(field):
        # average of both sides so that jumps sitting on a node are split evenly
        return 0.5 * (field.sample(np.clip(x - hp / 2, iv.a, iv.b))
                      + field.sample(np.clip(x + hp / 2, iv.a, iv.b)))

    A0, A1 = node_avg(m0), node_avg(m1)
    dt = problem.dt
    n_un = (J + 1) * N
    L = sp.lil_matrix((n_un, n_un))
    R = sp.lil_matrix((n_un, n_un))
    row = 0
    rows_of_node = {}

    def idx(i):
        return slice(i * N, (i + 1) * N)

    def add(rows_proj, i, blocks):
        nonlocal row
        r = rows_proj.shape[0]
        for node, B in blocks:
            L[row:row + r, node * N:(node + 1) * N] = L[row:row + r, node * N:(node + 1) * N] + rows_proj @ B
        R[row:row + r, idx(i)] = rows_proj @ A0[i] / dt
        rows_of_node[i] = rows_of_node.get(i, []) + [(row, rows_proj)]
        row += r

    I = np.eye(N)
    if Km.shape[0]:
        add(Km, 0, [(0, A0[0] / dt + A1[0] - Pm / hp), (1, Pm / hp)])
    for i in range(1, J):
        add(I, i, [(i - 1, -Pp / hp), (i, A0[i] / dt + A1[i] + (Pp - Pm) / hp), (i + 1, Pm / hp)])
    if Kp.shape[0]:
        add(Kp, J, [(J - 1, -Pp / hp), (J, A0[J] / dt + A1[J] + Pp / hp)])
    bc_row = row
    L[row:row + N, idx(J)] = W[:, :N]
    L[row:row + N, idx(0)] = W[:, N:]
    row += N
    assert row == n_un
    lu = spla.splu(L.tocsc())
    R = R.tocsr()

    def forcing_vec(t):
        vec = np.zeros(n_un)
        if problem.forcing is not None:
            F = np.stack([np.asarray(problem.forcing(k, x, t), dtype=float) * np.ones_like(x)
                          for k in range(N)], axis=1)
            for i, entries in rows_of_node.items():
                for r0, proj in entries:
                    vec[r0:r0 + proj.shape[0]] = proj @ F[i]
        if u is not None:
            vec[bc_row:bc_row + N] = u(t)
        return vec

    if w0 is None:
        w = np.zeros(n_un)
    else:
        w = np.stack([np.asarray(w0(k, x), dtype=float) * np.ones_like(x) for k in range(N)], axis=1).ravel()
    nsteps = int(round(problem.T / dt))
    times, values = [0.0], [w.copy()]
    for n in range(1, nsteps + 1):
        w = lu.solve(R @ w + forcing_vec(n * dt))
        times.append(n * dt)
        values.append(w.copy())
    nodes = np.array(values).reshape(len(times), J + 1, N)
    cells = 0.5 * (nodes[:, 1:, :] + nodes[:, :-1, :])
    flat = np.transpose(cells, (0, 2, 1)).reshape(len(times), N * J)
    energy = np.array([disc.energy(v) for v in flat])
    return Trajectory(np.array(times), flat, disc.phys_grid, energy, meta={"nodes": nodes, "x": x})
