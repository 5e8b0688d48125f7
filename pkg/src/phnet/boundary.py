"""Boundary conditions for ``d/dx`` on reference networks and for ``P1 d/dx`` on ``]a,b[^N``.

Two representations are supported:

* contraction form ``M out + in = 0`` on the reference network, where ``out``
  collects the traces at ``1/2`` (bounded and left half-line channels) and
  ``in`` the traces at ``-1/2`` (bounded and right half-line channels);
* matrix form ``W_B (w(b); w(a)) = 0`` on ``N`` copies of one bounded interval.

The boundary matrix ``C`` from :mod:`phnet.transform` links the two.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from .errors import BoundaryConditionError, DimensionError, InvariantViolation, NotCertifiedError

CONTRACTION_TOL = 1e-10
RANK_TOL = 1e-10
PSD_TOL = 1e-10

MAXIMAL = "accretive_maximal"
NOT_MAXIMAL = "accretive_not_maximal"
NOT_ACCRETIVE = "not_accretive"


def _as_matrix(A, name="matrix"):
    A = np.array(A, dtype=float, ndmin=2)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional")
    return A


def _smax(A):
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


def is_contraction(M, tol=CONTRACTION_TOL):
    return _smax(_as_matrix(M)) <= 1 + tol


@dataclass(frozen=True)
class ContractionForm:
    """``M out + in = 0`` with ``M`` of shape ``(n+m_plus, n+m_minus)`` and ``||M|| <= 1``."""

    M: np.ndarray
    counts: Optional[tuple] = None

    def __post_init__(self):
        M = _as_matrix(self.M, "M")
        object.__setattr__(self, "M", M)
        if self.counts is None:
            if M.shape[0] != M.shape[1]:
                raise DimensionError("a non-square M needs explicit (n, m_plus, m_minus)")
            object.__setattr__(self, "counts", (M.shape[0], 0, 0))
        n, mp, mm = self.counts
        object.__setattr__(self, "counts", (int(n), int(mp), int(mm)))
        if M.shape != (n + mp, n + mm):
            raise DimensionError(f"M has shape {M.shape}, counts {self.counts} need {(n + mp, n + mm)}")
        if not is_contraction(M):
            raise BoundaryConditionError(f"||M|| = {_smax(M):.6g} > 1")

    @property
    def norm(self):
        return _smax(self.M)

    def residual(self, out, inc):
        return self.M @ np.asarray(out) + np.asarray(inc)


@dataclass(frozen=True)
class MatrixForm:
    W_B: np.ndarray
    full_rank: bool = field(init=False)

    def __post_init__(self):
        W = _as_matrix(self.W_B, "W_B")
        if W.shape[1] % 2:
            raise DimensionError("W_B needs an even number of columns (traces at b and at a)")
        object.__setattr__(self, "W_B", W)
        object.__setattr__(self, "full_rank", matrix_rank(W) == W.shape[1] // 2)

    @property
    def N(self):
        return self.W_B.shape[1] // 2


def matrix_rank(A, tol=RANK_TOL):
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


@dataclass
class AccretivityCertificate:
    verdict: str
    M: Optional[np.ndarray] = None
    L: Optional[np.ndarray] = None
    witness: Optional[dict] = None
    rank: Optional[int] = None
    form_min: Optional[float] = None
    psd_min: Optional[float] = None
    psd_min_iii: Optional[float] = None
    non_unique: bool = False

    @property
    def maximal(self):
        return self.verdict == MAXIMAL

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        out = {"verdict": self.verdict, "rank": self.rank, "form_min": self.form_min,
               "psd_min": self.psd_min, "psd_min_iii": self.psd_min_iii,
               "M": arr(self.M), "L": arr(self.L), "M_non_unique": self.non_unique}
        if self.witness is not None:
            out["witness"] = {k: arr(v) for k, v in self.witness.items()}
        return out


def boundary_form(out_u, in_u, out_v=None, in_v=None):
    """``<out_u, out_v> - <in_u, in_v>``, the value of ``<u', v> + <u, v'>`` on the reference network."""
    out_u, in_u = np.atleast_1d(out_u).astype(float), np.atleast_1d(in_u).astype(float)
    out_v = out_u if out_v is None else np.atleast_1d(out_v).astype(float)
    in_v = in_u if in_v is None else np.atleast_1d(in_v).astype(float)
    if out_u.shape != out_v.shape or in_u.shape != in_v.shape:
        raise DimensionError("trace vectors of u and v have different sizes")
    return float(out_u @ out_v - in_u @ in_v)


@dataclass(frozen=True)
class AdjointCondition:
    """``out + M^T in = 0``: the roles of the traces are swapped relative to ``M out + in = 0``."""

    M_adj: np.ndarray

    def residual(self, out, inc):
        return np.asarray(out) + self.M_adj @ np.asarray(inc)

    def matrices(self):
        return np.eye(self.M_adj.shape[0]), self.M_adj


def adjoint_condition(M):
    M = M.M if isinstance(M, ContractionForm) else _as_matrix(M, "M")
    return AdjointCondition(M.T.copy())


def check_m_form(M, counts=None):
    """Certificate for a contraction-form condition on a general reference network."""
    M = _as_matrix(M, "M")
    s = _smax(M)
    if s <= 1 + CONTRACTION_TOL:
        return AccretivityCertificate(MAXIMAL, M=M, L=np.eye(M.shape[0]), form_min=1 - s * s)
    _, _, vt = np.linalg.svd(M)
    out = vt[0]
    return AccretivityCertificate(NOT_ACCRETIVE, M=M, form_min=1 - s * s,
                                  witness={"out": out, "in": -M @ out})


def _signature_forms(W, P1):
    N = P1.shape[0]
    Pinv = np.linalg.inv(P1)
    Z = np.zeros((N, N))
    proof = W @ np.block([[-Pinv, Z], [Z, Pinv]]) @ W.T
    A = np.block([[-P1, P1], [np.eye(N), np.eye(N)]])
    X = np.linalg.solve(A.T, W.T).T
    swap = np.block([[Z, np.eye(N)], [np.eye(N), Z]])
    iii = X @ swap @ X.T
    return 0.5 * (proof + proof.T), 0.5 * (iii + iii.T)


def _min_eig(S):
    return float(np.linalg.eigvalsh(S)[0]) if S.size else np.inf


def _is_psd(S):
    if not S.size:
        return True
    return _min_eig(S) >= -PSD_TOL * (1 + np.abs(S).max())


def check_wb_maccretive(W_B, P1, C):
    """Classify ``W_B (w(b); w(a)) = 0`` for ``P1 d/dx`` on ``]a,b[^N``.

    The verdict comes from the boundary form ``t^T diag(P1, -P1) t`` on the
    kernel of ``W_B``.  For rank ``N`` this is equivalent to the
    semidefiniteness of ``W_B diag(-P1^-1, P1^-1) W_B^T``; that matrix and its
    unsimplified variant are reported alongside.
    """
    W = W_B.W_B if isinstance(W_B, MatrixForm) else _as_matrix(W_B, "W_B")
    P1 = _as_matrix(P1, "P1")
    Cm = C.C if hasattr(C, "C") else _as_matrix(C, "C")
    N = P1.shape[0]
    if W.shape[1] != 2 * N or Cm.shape != (2 * N, 2 * N):
        raise DimensionError(f"W_B must have {2 * N} columns and C must be {2 * N}x{2 * N}")
    rank = matrix_rank(W)
    J = np.block([[P1, np.zeros((N, N))], [np.zeros((N, N)), -P1]])
    Zk = null_space(W, rcond=RANK_TOL) if rank < 2 * N else np.zeros((2 * N, 0))
    G = Zk.T @ J @ Zk
    G = 0.5 * (G + G.T)
    form_min = _min_eig(G)
    accretive = _is_psd(G)
    proof, iii = _signature_forms(W, P1)
    psd_min, psd_iii = _min_eig(proof), _min_eig(iii)
    if _is_psd(proof) != _is_psd(iii):
        raise InvariantViolation("the two semidefiniteness tests disagree")
    cert = AccretivityCertificate(NOT_ACCRETIVE, rank=rank, form_min=form_min,
                                  psd_min=psd_min, psd_min_iii=psd_iii)
    if not accretive:
        vals, vecs = np.linalg.eigh(G)
        t = Zk @ vecs[:, 0]
        s = np.linalg.solve(Cm, t)
        cert.witness = {"traces": t, "out": s[:N], "in": s[N:]}
        return cert
    if rank == N:
        L, M = factor_wb(W, Cm)
        cert.verdict, cert.M, cert.L = MAXIMAL, M, L
        return cert
    # accretive but too many conditions: report the canonical zero extension
    cert.verdict = NOT_MAXIMAL
    S = np.linalg.solve(Cm, Zk)
    cert.M = -S[N:] @ np.linalg.pinv(S[:N]) if S.shape[1] else np.zeros((N, N))
    cert.non_unique = True
    return cert


def factor_wb(W_B, C, require_contraction=True):
    """``W_B C = L (M  I)`` with ``L = K2`` and ``M = K2^-1 K1``; returns ``(L, M)``."""
    W = W_B.W_B if isinstance(W_B, MatrixForm) else _as_matrix(W_B, "W_B")
    Cm = C.C if hasattr(C, "C") else _as_matrix(C, "C")
    N = Cm.shape[0] // 2
    if W.shape != (N, 2 * N):
        raise DimensionError(f"W_B must be {N}x{2 * N} to be factored, got {W.shape}")
    K = W @ Cm
    K1, K2 = K[:, :N], K[:, N:]
    s = np.linalg.svd(K2, compute_uv=False)
    if s[-1] <= RANK_TOL * max(1.0, np.abs(K).max()):
        raise NotCertifiedError("K2 is singular: the condition is not maximal accretive")
    M = np.linalg.solve(K2, K1)
    if require_contraction and not is_contraction(M):
        raise NotCertifiedError(f"||K2^-1 K1|| = {_smax(M):.6g} > 1")
    resid = np.abs(K - K2 @ np.hstack([M, np.eye(N)])).max()
    if resid > 1e-10 * max(1.0, np.abs(K).max()):
        raise InvariantViolation(f"W_B C != L (M I), residual {resid:.3e}")
    return K2, M


def contraction_to_wb(M, C):
    """``W_B = (M  I) C^-1``."""
    M = M.M if isinstance(M, ContractionForm) else _as_matrix(M, "M")
    Cm = C.C if hasattr(C, "C") else _as_matrix(C, "C")
    N = M.shape[0]
    if Cm.shape != (2 * N, 2 * N):
        raise DimensionError("C does not match M")
    return np.linalg.solve(Cm.T, np.hstack([M, np.eye(N)]).T).T


def accretivity_sampler(M, counts=None, trials=1000, h=1e-3, seed=0):
    """Smallest observed ``<D_h u, u> / |out|^2`` over random lifts satisfying ``in = -M out``.

    Each sample draws random outgoing traces, sets ``in = -M out`` and lifts the
    traces to an affine function on bounded channels (a ramp of unit length on
    half-lines), then evaluates the upwind operator.
    """
    from .discretize import assemble_operator, build_grid, reference_network_for

    M = _as_matrix(M, "M")
    if counts is None:
        counts = (M.shape[0], 0, 0)
    n, mp, mm = counts
    net = reference_network_for(counts)
    grid = build_grid(net, h, T=0.0)
    op = assemble_operator(grid, M, counts=counts, check=False)
    rng = np.random.default_rng(seed)
    centres = [c.centers for c in grid.channels]
    worst = np.inf
    for _ in range(trials):
        out = rng.standard_normal(n + mm)
        inc = -M @ out
        vals = []
        for k, x in enumerate(centres):
            if k < n:
                vals.append(out[k] * (x + 0.5) + inc[k] * (0.5 - x))
            elif k < n + mp:
                vals.append(inc[k] * np.clip(0.5 - x, 0.0, 1.0))
            else:
                vals.append(out[n + (k - n - mp)] * np.clip(x + 0.5, 0.0, 1.0))
        u = np.concatenate(vals)
        val = float(np.sum(grid.weights * (op.matrix @ u) * u)) / float(out @ out)
        worst = min(worst, val)
    return worst
