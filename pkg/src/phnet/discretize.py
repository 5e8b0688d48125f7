"""Upwind discretisation of ``d/dx`` on reference networks.

After the congruence every channel transports with speed +1, so a single
backward difference serves all channels.  On inflow cells the ghost value is
eliminated through ``in = -M out + g``, where ``out`` is the value in the last
cell of each outgoing channel.  For ``||M|| <= 1`` this gives exactly

    2 <D_h u, u> = |out|^2 - |in|^2 + sum_j (u_j - u_{j-1})^2  >= 0.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionError, GridMismatchError, SolverError
from .grid import ChannelGrid, Grid
from .network import Interval, NetworkSpec, classify

_REFERENCE = {
    "bounded": Interval.bounded(-0.5, 0.5),
    "right": Interval.right_half_line(-0.5),
    "left": Interval.left_half_line(0.5),
}


def reference_network_for(counts):
    n, mp, mm = counts
    return NetworkSpec(tuple([_REFERENCE["bounded"]] * n + [_REFERENCE["right"]] * mp
                             + [_REFERENCE["left"]] * mm))


def truncation_length(h, T):
    """Length kept on a half-line; covers the unit-speed domain of dependence over ``[0, T]``."""
    return np.ceil((T + 1.0 + 3.0 * h) / h - 1e-9) * h


def build_grid(net, h, T=0.0, side="reference"):
    """Uniform cell-centred grid; ``h`` is reduced so that bounded channels hold whole cells."""
    if not h > 0 or T < 0:
        raise ValueError("need h > 0 and T >= 0")
    chans = []
    bounded_lengths = [iv.length for iv in net.intervals if iv.kind == "bounded"]
    if bounded_lengths and h >= min(bounded_lengths):
        raise ValueError(f"h = {h} is not smaller than the shortest interval {min(bounded_lengths)}")
    for iv in net.intervals:
        if iv.kind == "bounded":
            J = int(np.ceil(iv.length / h - 1e-9))
            chans.append(ChannelGrid("bounded", np.linspace(iv.a, iv.b, J + 1)))
        else:
            # half-lines share the spacing of the bounded channels (1/J on reference networks)
            hh = 1.0 / int(np.ceil(1.0 / h - 1e-9)) if h < 1 else h
            L = truncation_length(hh, T)
            J = int(round(L / hh))
            if iv.kind == "right":
                chans.append(ChannelGrid("right", iv.a + hh * np.arange(J + 1)))
            else:
                chans.append(ChannelGrid("left", iv.b - hh * np.arange(J, -1, -1)))
    return Grid(tuple(chans), side=side, horizon=float(T))


def grid_counts(grid):
    kinds = [c.kind for c in grid.channels]
    counts = (kinds.count("bounded"), kinds.count("right"), kinds.count("left"))
    expected = ["bounded"] * counts[0] + ["right"] * counts[1] + ["left"] * counts[2]
    if kinds != expected:
        raise GridMismatchError("reference grids must list bounded, right, left channels in that order")
    return counts


@dataclass(frozen=True)
class DiscreteOperator:
    matrix: sp.csr_matrix
    grid: Grid
    M: np.ndarray
    counts: tuple
    inflow: Optional[sp.csr_matrix] = None
    out_index: np.ndarray = field(default=None, repr=False)
    in_index: np.ndarray = field(default=None, repr=False)
    adjoint: bool = False

    def out_traces(self, u):
        return np.asarray(u)[self.out_index]

    def in_traces(self, u, g=None):
        """Inflow traces implied by the boundary condition (the eliminated ghost values)."""
        vals = -self.M @ self.out_traces(u)
        return vals if g is None else vals + g

    def apply(self, u, g=None):
        du = self.matrix @ np.asarray(u)
        if g is not None:
            du = du - self.inflow @ g
        return du

    def inner(self, u, v):
        return float(np.sum(self.grid.weights * u * v))


def _trace_indices(grid, counts):
    n, mp, mm = counts
    off = grid.offsets
    outgoing = list(range(n)) + list(range(n + mp, n + mp + mm))
    incoming = list(range(n + mp))
    out_index = np.array([off[k + 1] - 1 for k in outgoing], dtype=int)
    in_index = np.array([off[k] for k in incoming], dtype=int)
    return out_index, in_index


def assemble_operator(grid, M, counts=None, check=True):
    """Backward-difference ``D_h`` with inflow values ``-M out`` eliminated.

    ``M`` may be a :class:`~phnet.boundary.ContractionForm` or a plain array;
    plain arrays skip the contraction check so that non-accretive conditions can
    be studied as well.
    """
    from .boundary import ContractionForm

    if isinstance(M, ContractionForm):
        counts = M.counts if counts is None else counts
        M = M.M
    M = np.array(M, dtype=float, ndmin=2)
    gc = grid_counts(grid)
    counts = gc if counts is None else tuple(counts)
    if counts != gc:
        raise DimensionError(f"grid has channel counts {gc}, boundary condition expects {counts}")
    n, mp, mm = counts
    if M.shape != (n + mp, n + mm):
        raise DimensionError(f"M has shape {M.shape}, expected {(n + mp, n + mm)}")
    if check:
        ContractionForm(M, counts)
    out_index, in_index = _trace_indices(grid, counts)
    rows, cols, vals = [], [], []
    for k, ch in enumerate(grid.channels):
        s = grid.slice(k)
        idx = np.arange(s.start, s.stop)
        rows += [idx, idx[1:]]
        cols += [idx, idx[:-1]]
        vals += [np.full(idx.size, 1.0 / ch.h), np.full(idx.size - 1, -1.0 / ch.h)]
    # ghost on inflow cell i is -(M out)_i
    hin = np.array([grid.channels[k].h for k in range(n + mp)])
    r, c = np.nonzero(M)
    rows.append(in_index[r])
    cols.append(out_index[c])
    vals.append(M[r, c] / hin[r])
    D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.size, grid.size))
    E = sp.csr_matrix((1.0 / hin, (in_index, np.arange(n + mp))), shape=(grid.size, n + mp))
    return DiscreteOperator(D, grid, M, counts, E, out_index, in_index)


def discrete_adjoint(op):
    """Adjoint of ``D_h`` in the grid inner product.

    It is the downwind discretisation of ``-d/dx`` with the adjoint condition
    ``out + M^T in = 0``.  Taking the adjoint twice returns the original matrix.
    """
    w = op.grid.weights
    A = (sp.diags(1.0 / w) @ op.matrix.T @ sp.diags(w)).tocsr()
    return DiscreteOperator(A, op.grid, op.M, op.counts, None, op.out_index, op.in_index,
                            adjoint=not op.adjoint)


def forward_difference(grid, v, right_traces):
    """``(v_{j+1} - v_j) / h`` with ``right_traces[k]`` standing in for the cell past the end."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    for k, ch in enumerate(grid.channels):
        s = grid.slice(k)
        vk = v[s]
        nxt = np.append(vk[1:], right_traces[k])
        out[s] = (nxt - vk) / ch.h
    return out


def reflect(grid):
    """Permutation reversing every channel (``x -> -x`` on symmetric bounded grids)."""
    perm = np.concatenate([np.arange(grid.offsets[k + 1] - 1, grid.offsets[k] - 1, -1)
                           for k in range(grid.nchannels)])
    return sp.csr_matrix((np.ones(grid.size), (np.arange(grid.size), perm)), shape=(grid.size,) * 2)


def to_coo_text(op):
    """Plain coordinate-list dump: a header line, then ``row col value`` per nonzero."""
    A = op.matrix.tocoo()
    order = np.lexsort((A.col, A.row))
    lines = [f"# {A.shape[0]} {A.shape[1]} {A.nnz}"]
    lines += [f"{A.row[i]} {A.col[i]} {A.data[i]:.17g}" for i in order]
    return "\n".join(lines) + "\n"


def resolvent_norm(op, lam=1.0):
    """``||(lam + D_h)^-1||`` in the grid inner product; ``inf`` if ``lam + D_h`` is singular."""
    s = np.sqrt(op.grid.weights)
    A = (sp.diags(s) @ (lam * sp.identity(op.grid.size) + op.matrix) @ sp.diags(1.0 / s)).tocsc()
    AtA = (A.T @ A).tocsc()
    try:
        lu = spla.splu(AtA)
    except RuntimeError:
        return np.inf
    n = AtA.shape[0]
    inv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    try:
        val = spla.eigsh(inv, k=1, which="LA", tol=1e-13, v0=np.ones(n),
                         return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence as exc:
        raise SolverError("resolvent norm iteration did not converge") from exc
    return float(np.sqrt(val))
