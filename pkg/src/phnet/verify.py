"""Battery of invariant checks run on a problem at several grid levels."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import accretivity_sampler, check_wb_maccretive, factor_wb, matrix_rank
from .discretize import assemble_operator, build_grid, discrete_adjoint, resolvent_norm
from .evolve import simulate
from .transform import apply_V, boundary_matrix_c, build_congruence, physical_grid


@dataclass
class CheckResult:
    name: str
    level: int
    h: float
    passed: bool
    value: float
    detail: str = ""

    def to_dict(self):
        return {"check": self.name, "level": self.level, "h": self.h, "passed": bool(self.passed),
                "value": float(self.value), "detail": self.detail}


class Context:
    """Everything a check needs for one problem at one grid level."""

    def __init__(self, spec, h, seed, inject_norm=None):
        self.spec = spec
        self.h = h
        self.rng = np.random.default_rng(seed)
        self.plan = build_congruence(spec.net, spec.P1)
        self.C = boundary_matrix_c(self.plan, spec.P1).C if spec.net.all_bounded_equal else None
        if spec.W_B is not None:
            cert = check_wb_maccretive(spec.W_B, spec.P1, self.C)
            self.M = cert.M if cert.M is not None else np.zeros((spec.N, spec.N))
        else:
            self.M = np.array(spec.M, dtype=float)
        if inject_norm is not None:
            nrm = np.linalg.norm(self.M, 2)
            self.M = inject_norm * (self.M / nrm if nrm > 0 else np.eye(*self.M.shape))
        self.counts = self.plan.target_counts
        self.grid = build_grid(self.plan.reference_network(), h, T=spec.evolution.get("T", 1.0))
        self.op = assemble_operator(self.grid, self.M, counts=self.counts, check=False)


CHECKS = {}


def check(name):
    def deco(func):
        CHECKS[name] = func
        return func
    return deco


@check("boundary_matrix_identity")
def _c_identity(ctx):
    if ctx.C is None:
        return True, 0.0, "skipped: network is not N copies of one bounded interval"
    N = ctx.spec.N
    J = np.block([[ctx.spec.P1, np.zeros((N, N))], [np.zeros((N, N)), -ctx.spec.P1]])
    res = np.abs(ctx.C.T @ J @ ctx.C - np.diag(np.r_[np.ones(N), -np.ones(N)])).max()
    return res <= 1e-10, res, ""


@check("factorization_identity")
def _factor(ctx):
    if ctx.spec.W_B is None or ctx.C is None:
        return True, 0.0, "skipped: no W_B"
    if matrix_rank(ctx.spec.W_B) != ctx.spec.N:
        return False, np.inf, "W_B does not have rank N"
    try:
        L, M = factor_wb(ctx.spec.W_B, ctx.C)
    except Exception as exc:  # noqa: BLE001 - report any failure as a failed check
        return False, np.inf, str(exc)
    N = ctx.spec.N
    res = np.abs(ctx.spec.W_B @ ctx.C - L @ np.hstack([M, np.eye(N)])).max()
    return res <= 1e-10 and np.linalg.norm(M, 2) <= 1 + 1e-10, res, ""


@check("contraction")
def _contraction(ctx):
    s = np.linalg.norm(ctx.M, 2)
    return s <= 1 + 1e-10, s, "largest singular value of M"


@check("accretivity_sampler")
def _sampler(ctx):
    val = accretivity_sampler(ctx.M, ctx.counts, trials=200, h=ctx.h, seed=int(ctx.rng.integers(1 << 31)))
    return val >= -1e-12, val, "min <D_h u, u> / |out|^2"


@check("adjoint_sampler")
def _adjoint_sampler(ctx):
    n, mp, mm = ctx.counts
    val = accretivity_sampler(ctx.M.T, (n, mm, mp), trials=200, h=ctx.h, seed=int(ctx.rng.integers(1 << 31)))
    return val >= -1e-12, val, "adjoint condition, roles of traces swapped"


@check("dissipativity")
def _dissipativity(ctx):
    w = ctx.grid.weights
    A = sp.diags(w) @ ctx.op.matrix
    S = (0.5 * (A + A.T) / w.mean()).tocsc()
    scale = max(abs(S).max(), 1.0) if S.nnz else 1.0
    if S.shape[0] <= 3000:
        val = float(np.linalg.eigvalsh(S.toarray())[0])
    else:
        val = float(spla.eigsh(S, k=1, which="SA", return_eigenvectors=False, tol=1e-10,
                               v0=ctx.rng.standard_normal(S.shape[0]), maxiter=20000)[0])
    return val >= -1e-12 * scale, val, "smallest eigenvalue of sym(D_h)"


@check("resolvent_bound")
def _resolvent(ctx):
    val = resolvent_norm(ctx.op, 1.0)
    return val <= 1 + 1e-8, val, "||(I + D_h)^-1||"


@check("adjoint_involution")
def _involution(ctx):
    twice = discrete_adjoint(discrete_adjoint(ctx.op))
    val = float(abs(twice.matrix - ctx.op.matrix).max()) if twice.matrix.nnz else 0.0
    scale = float(abs(ctx.op.matrix).max()) if ctx.op.matrix.nnz else 1.0
    return val <= 1e-13 * scale, val, "max |(D_h*)* - D_h|"


@check("summation_by_parts")
def _sbp(ctx):
    grid = ctx.grid
    x = [c.centers for c in grid.channels]
    n, mp, mm = ctx.counts
    out_t = ctx.rng.standard_normal(n + mm)
    inc = -ctx.M @ out_t
    vals = []
    for k, xc in enumerate(x):
        if k < n:
            vals.append(out_t[k] * (xc + 0.5) + inc[k] * (0.5 - xc) + 0.1 * np.sin(np.pi * (xc + 0.5)))
        elif k < n + mp:
            vals.append(inc[k] * np.exp(-(xc + 0.5)))
        else:
            vals.append(out_t[k - mp] * np.exp(xc - 0.5))
    u = np.concatenate(vals)
    lhs = 2 * float(np.sum(grid.weights * (ctx.op.matrix @ u) * u))
    res = abs(lhs - (out_t @ out_t - inc @ inc))
    return res <= 20 * ctx.h * (1 + float(u @ u) * ctx.h), res / ctx.h, "residual / h"


@check("adjoint_pairing")
def _pairing(ctx):
    pg = physical_grid(ctx.plan, ctx.grid)
    u = pg.sample(lambda k, xx: np.sin(3 * xx + k))
    v = ctx.grid.sample(lambda k, xx: np.cos(2 * xx - k))
    val = abs(apply_V(ctx.plan, u).inner(v) - u.inner(apply_V(ctx.plan, v, "adjoint")))
    return val <= 1e-8, val, ""


@check("energy_monotone")
def _energy(ctx):
    spec = ctx.spec
    ev = spec.evolution
    if np.linalg.norm(ctx.M, 2) > 1 + 1e-10:
        return False, np.inf, "boundary condition is not a contraction"
    # the energy identity only holds for the default M0, M1
    if ev.get("M0") is not None or ev.get("M1") is not None:
        return True, 0.0, "skipped: non-default M0/M1"
    P0 = spec.P0 if spec.P0 is not None else np.zeros((spec.N, spec.N))
    if np.abs(P0 + P0.T).max() > 1e-12:
        return True, 0.0, "skipped: P0 not skew"
    problem = spec.evo_problem(h=ctx.h, dt=ctx.h)
    problem.T = min(problem.T, 0.25)
    traj = simulate(problem, spec.initial_function())
    inc = float(np.max(np.diff(traj.energy), initial=0.0))
    return inc <= 1e-12 * max(1.0, traj.energy[0]), inc, "largest energy increase per step"


def run_checks(spec, names=None, refinements=3, h0=None, seed=0, inject_norm=None):
    """Run the selected checks on ``refinements`` grid levels ``h0, h0/2, ...``."""
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    if not names:
        return []
    h0 = spec.evolution.get("h", 1e-2) if h0 is None else h0
    results = []
    for level in range(refinements):
        h = h0 / 2 ** level
        ctx = Context(spec, h, seed + level, inject_norm)
        for name in names:
            passed, value, detail = CHECKS[name](ctx)
            results.append(CheckResult(name, level, h, bool(passed), float(value), detail))
    return results
