"""The congruence that turns ``P1 d/dx`` on a network into ``d/dx`` on reference intervals.

The transform is kept in factored form

    V = D2^{-1/2} . Q . W . Psi . K

with ``K`` an orthogonal (compatible) diagonaliser of ``P1``, ``Psi`` the
unitary rescaling of every channel onto a reference interval, ``W`` a
reflection ``x -> -x`` on channels whose rescaled coefficient is negative,
``Q`` a channel permutation into (bounded, right, left) order and ``D2`` the
remaining positive diagonal.  Each factor has an explicit adjoint and inverse.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .config import exact_tol
from .errors import DimensionError, GridMismatchError, InvariantViolation, SingularCouplingError
from .grid import ChannelGrid, Grid, GridFunction
from .network import Interval, NetworkSpec, classify, validate_p1

_REFERENCE = {
    "bounded": Interval.bounded(-0.5, 0.5),
    "right": Interval.right_half_line(-0.5),
    "left": Interval.left_half_line(0.5),
}
_FLIP = {"bounded": "bounded", "right": "left", "left": "right"}


@dataclass(frozen=True)
class AffineChannelMap:
    """``phi(x) = slope*x + offset`` maps the reference interval onto channel ``channel``.

    ``weight`` is the factor in ``u -> weight * (u o phi)``, which is unitary
    between the two L2 spaces.
    """

    channel: int
    kind: str
    slope: float
    offset: float
    weight: float

    def phi(self, x):
        return self.slope * np.asarray(x) + self.offset

    def phi_inv(self, y):
        return (np.asarray(y) - self.offset) / self.slope


def affine_map(iv, channel=0):
    if iv.kind == "bounded":
        length = iv.b - iv.a
        return AffineChannelMap(channel, "bounded", length, 0.5 * (iv.a + iv.b), float(np.sqrt(length)))
    if iv.kind == "right":
        return AffineChannelMap(channel, "right", 1.0, iv.a + 0.5, 1.0)
    return AffineChannelMap(channel, "left", 1.0, iv.b - 0.5, 1.0)


def pushforward(cmap, u):
    """``weight * (u o phi)`` for a single-channel grid function on the physical interval."""
    if u.grid.nchannels != 1:
        raise GridMismatchError("pushforward acts on a single channel")
    ch = u.grid.channels[0]
    ref = ChannelGrid(cmap.kind, cmap.phi_inv(ch.edges))
    return GridFunction(Grid((ref,), side="reference"), cmap.weight * u.values)


def pullback(cmap, v):
    """Inverse (and adjoint) of :func:`pushforward`."""
    if v.grid.nchannels != 1:
        raise GridMismatchError("pullback acts on a single channel")
    ch = v.grid.channels[0]
    phys = ChannelGrid(cmap.kind, cmap.phi(ch.edges))
    return GridFunction(Grid((phys,), side="physical"), v.values / cmap.weight)


def diagonalize_p1(P1, net, tol=None):
    """Orthogonal ``K`` and diagonal ``D1`` with ``K P1 K^T = D1``.

    The eigendecomposition runs per class of identical intervals, so ``K`` is
    itself compatible.  Within a class eigenvalues are sorted in descending
    order and each eigenvector is signed so its first nonzero entry is positive.
    """
    P1 = validate_p1(P1, net, tol)
    tol = exact_tol() if tol is None else tol
    N = net.N
    K = np.zeros((N, N))
    d = np.zeros(N)
    for group in net.classes():
        idx = np.array(group)
        vals, vecs = np.linalg.eigh(P1[np.ix_(idx, idx)])
        rank = np.argsort(-vals, kind="stable")
        vals, vecs = vals[rank], vecs[:, rank]
        for col in range(vecs.shape[1]):
            v = vecs[:, col]
            first = np.flatnonzero(np.abs(v) > 1e-12)[0]
            if v[first] < 0:
                vecs[:, col] = -v
        if np.abs(vals).min() <= tol * max(1.0, np.abs(vals).max()):
            raise SingularCouplingError("P1 has a (numerically) zero eigenvalue")
        K[np.ix_(idx, idx)] = vecs.T
        d[idx] = vals
    return K, np.diag(d)


@dataclass(frozen=True)
class CongruencePlan:
    network: NetworkSpec
    K: np.ndarray
    D1: np.ndarray
    psi: tuple
    reflections: tuple
    order: tuple
    D2: np.ndarray
    target_counts: tuple
    _kinds: tuple = field(repr=False, default=())

    @property
    def N(self):
        return self.network.N

    @property
    def Q(self):
        """Permutation matrix: reference channel ``r`` is pre-permutation channel ``order[r]``."""
        Q = np.zeros((self.N, self.N))
        Q[np.arange(self.N), self.order] = 1.0
        return Q

    @property
    def reference_kinds(self):
        return self._kinds

    def reference_network(self):
        return NetworkSpec(tuple(_REFERENCE[k] for k in self._kinds))

    def is_identity(self, tol=1e-14):
        return (
            np.allclose(self.K, np.eye(self.N), atol=tol)
            and all(abs(m.slope - 1) < tol and abs(m.weight - 1) < tol for m in self.psi)
            and not any(self.reflections)
            and tuple(self.order) == tuple(range(self.N))
            and np.allclose(np.diag(self.D2), 1.0, atol=tol)
        )

    def to_dict(self):
        return {
            "N": self.N,
            "target_counts": {"n": self.target_counts[0], "m_plus": self.target_counts[1],
                              "m_minus": self.target_counts[2]},
            "K": self.K.tolist(),
            "D1": np.diag(self.D1).tolist(),
            "psi": [
                {"channel": m.channel, "kind": m.kind, "slope": m.slope, "offset": m.offset,
                 "weight": m.weight}
                for m in self.psi
            ],
            "reflections": [bool(r) for r in self.reflections],
            "Q_order": [int(o) for o in self.order],
            "D2": np.diag(self.D2).tolist(),
            "reference_kinds": list(self._kinds),
        }


def build_congruence(net, P1, tol=None):
    K, D1 = diagonalize_p1(P1, net, tol)
    psi = tuple(affine_map(iv, k) for k, iv in enumerate(net.intervals))
    # rescaling by slope turns d/dx into d/dx / slope on the reference interval
    scaled = np.diag(D1) / np.array([m.slope for m in psi])
    reflections = tuple(bool(s < 0) for s in scaled)
    kinds = [_FLIP[m.kind] if r else m.kind for m, r in zip(psi, reflections)]
    order = tuple(k for kind in ("bounded", "right", "left") for k in range(net.N) if kinds[k] == kind)
    D2 = np.diag(np.abs(scaled)[list(order)])
    ref_kinds = tuple(kinds[k] for k in order)
    counts = (ref_kinds.count("bounded"), ref_kinds.count("right"), ref_kinds.count("left"))
    return CongruencePlan(net, K, D1, psi, reflections, order, D2, counts, ref_kinds)


# ---------------------------------------------------------------------------
# grids on both sides of the transform


def _pre_reflection(plan, ref_grid):
    """Channel grids after Psi but before the reflection, in physical channel order."""
    inv = np.argsort(plan.order)
    out = []
    for k in range(plan.N):
        g = ref_grid.channels[inv[k]]
        if plan.reflections[k]:
            g = g.mapped(_FLIP[g.kind], -1.0, 0.0)
        out.append(g)
    return out


def physical_grid(plan, ref_grid):
    """The physical grid whose cells are the images of the reference cells."""
    if ref_grid.nchannels != plan.N:
        raise GridMismatchError("reference grid has the wrong number of channels")
    for k, (g, kind) in enumerate(zip(ref_grid.channels, plan.reference_kinds)):
        if g.kind != kind:
            raise GridMismatchError(f"reference channel {k} is {g.kind}, plan expects {kind}")
    chans = []
    for m, g in zip(plan.psi, _pre_reflection(plan, ref_grid)):
        chans.append(g.mapped(m.kind, m.slope, m.offset))
    # identical intervals must carry identical cells so that K can mix them
    for group in plan.network.classes():
        for k in group[1:]:
            if not chans[k].same_cells(chans[group[0]]):
                raise GridMismatchError("channels on the same interval received different cells")
    return Grid(tuple(chans), side="physical")


def reference_grid(plan, phys_grid):
    """Inverse of :func:`physical_grid`."""
    pre = []
    for m, g in zip(plan.psi, phys_grid.channels):
        pre.append(ChannelGrid(m.kind, m.phi_inv(g.edges)))
    chans = []
    for r, k in enumerate(plan.order):
        g = pre[k]
        if plan.reflections[k]:
            g = g.mapped(_FLIP[g.kind], -1.0, 0.0)
        chans.append(g)
    return Grid(tuple(chans), side="reference")


# ---------------------------------------------------------------------------
# factor matrices


def _block_matrix(grid, coeffs):
    """Sparse matrix applying the constant channel-mixing matrix ``coeffs`` cell by cell."""
    rows, cols, vals = [], [], []
    for j, k in zip(*np.nonzero(coeffs)):
        n = grid.channels[j].ncells
        if grid.channels[k].ncells != n:
            raise GridMismatchError("mixing channels with different cell counts")
        idx = np.arange(n)
        rows.append(grid.offsets[j] + idx)
        cols.append(grid.offsets[k] + idx)
        vals.append(np.full(n, coeffs[j, k]))
    if not rows:
        return sp.csr_matrix((grid.size, grid.size))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(grid.size, grid.size))


def _channel_diag(grid, per_channel):
    return sp.diags(np.concatenate([np.full(c.ncells, s) for c, s in zip(grid.channels, per_channel)]))


def _reflection(grid, flags):
    perm = np.arange(grid.size)
    for k, f in enumerate(flags):
        if f:
            s = grid.slice(k)
            perm[s] = perm[s][::-1]
    return sp.csr_matrix((np.ones(grid.size), (np.arange(grid.size), perm)), shape=(grid.size, grid.size))


def _permutation(src_grid, order):
    """Rows of the result are the channels ``order[0], order[1], ...`` of the source."""
    cols = np.concatenate([np.arange(src_grid.offsets[k], src_grid.offsets[k + 1]) for k in order])
    n = src_grid.size
    return sp.csr_matrix((np.ones(n), (np.arange(n), cols)), shape=(n, n))


@dataclass(frozen=True)
class Factor:
    name: str
    forward: sp.spmatrix
    adjoint: sp.spmatrix
    inverse: sp.spmatrix


def factors(plan, phys_grid):
    """The five factors of ``V`` in application order (K first), as sparse matrices."""
    d2 = np.diag(plan.D2)
    weights = [m.weight for m in plan.psi]
    K = _block_matrix(phys_grid, plan.K)
    KT = _block_matrix(phys_grid, plan.K.T)
    Psi = _channel_diag(phys_grid, weights)
    PsiInv = _channel_diag(phys_grid, [1.0 / w for w in weights])
    W = _reflection(phys_grid, plan.reflections)
    Q = _permutation(phys_grid, plan.order)
    ref_sizes = [phys_grid.channels[k].ncells for k in plan.order]
    S = sp.diags(np.concatenate([np.full(n, 1 / np.sqrt(s)) for n, s in zip(ref_sizes, d2)]))
    Sinv = sp.diags(np.concatenate([np.full(n, np.sqrt(s)) for n, s in zip(ref_sizes, d2)]))
    return [
        Factor("K", K, KT, KT),
        Factor("Psi", Psi, PsiInv, PsiInv),
        Factor("W", W, W, W),
        Factor("Q", Q, Q.T.tocsr(), Q.T.tocsr()),
        Factor("D2^-1/2", S, S, Sinv),
    ]


_DIRECTIONS = ("forward", "adjoint", "inverse", "adjoint_inverse")


def V_matrix(plan, phys_grid, direction="forward"):
    """Assembled sparse matrix of ``V`` (or its adjoint / inverse) on the given grids."""
    fs = factors(plan, phys_grid)
    if direction == "forward":
        mats = [f.forward for f in fs]
    elif direction == "adjoint_inverse":
        mats = [f.forward for f in fs[:-1]] + [fs[-1].inverse]
    elif direction == "adjoint":
        mats = [f.adjoint for f in reversed(fs)]
    elif direction == "inverse":
        mats = [f.inverse for f in reversed(fs)]
    else:
        raise ValueError(f"direction must be one of {_DIRECTIONS}")
    out = mats[0]
    for m in mats[1:]:
        out = m @ out
    return out.tocsr()


def apply_V(plan, u, direction="forward"):
    """Apply ``V``, ``V*``, ``V^-1`` or ``(V*)^-1`` factor by factor to a grid function."""
    if direction not in _DIRECTIONS:
        raise ValueError(f"direction must be one of {_DIRECTIONS}")
    from_physical = direction in ("forward", "adjoint_inverse")
    if from_physical:
        if u.grid.side != "physical":
            raise GridMismatchError(f"{direction} expects a function on the physical network")
        phys = u.grid
        target = reference_grid(plan, phys)
    else:
        if u.grid.side != "reference":
            raise GridMismatchError(f"{direction} expects a function on the reference network")
        target = physical_grid(plan, u.grid)
        phys = target
    fs = factors(plan, phys)
    x = u.values
    if direction == "forward":
        for f in fs:
            x = f.forward @ x
    elif direction == "adjoint_inverse":
        for f in fs[:-1]:
            x = f.forward @ x
        x = fs[-1].inverse @ x
    elif direction == "adjoint":
        for f in reversed(fs):
            x = f.adjoint @ x
    else:
        for f in reversed(fs):
            x = f.inverse @ x
    return GridFunction(target, x)


# ---------------------------------------------------------------------------
# boundary matrix C


@dataclass(frozen=True)
class BoundaryMatrixC:
    C: np.ndarray
    P1: np.ndarray

    def residual(self):
        N = self.P1.shape[0]
        J = np.block([[self.P1, np.zeros((N, N))], [np.zeros((N, N)), -self.P1]])
        target = np.diag(np.concatenate([np.ones(N), -np.ones(N)]))
        return float(np.abs(self.C.T @ J @ self.C - target).sum(axis=1).max())


def _adjoint_traces(plan, right, left, length):
    """Push the endpoint values of an affine-per-channel reference function through ``V*``.

    Every factor maps channelwise affine functions to channelwise affine
    functions, so tracking the two endpoint values per channel is exact.
    Returns the traces ``(at b, at a)`` of the physical function.
    """
    s = 1.0 / np.sqrt(np.diag(plan.D2))
    right, left = right * s, left * s
    inv = np.argsort(plan.order)
    right, left = right[inv], left[inv]
    refl = np.array(plan.reflections)
    right, left = np.where(refl, left, right), np.where(refl, right, left)
    w = np.array([m.weight for m in plan.psi])
    right, left = right / w, left / w
    return plan.K.T @ right, plan.K.T @ left


def boundary_matrix_c(plan, P1, check_tol=1e-8):
    """``C`` with ``((V*u)(b), (V*u)(a)) = C (u(1/2), u(-1/2))``, built by probing affine lifts."""
    net = plan.network
    if not net.all_bounded_equal:
        raise DimensionError("the boundary matrix needs all channels on one bounded interval")
    P1 = np.asarray(P1, dtype=float)
    N = plan.N
    length = net.intervals[0].length
    C = np.zeros((2 * N, 2 * N))
    for col in range(2 * N):
        e = np.zeros(2 * N)
        e[col] = 1.0
        b_vals, a_vals = _adjoint_traces(plan, e[:N], e[N:], length)
        C[:, col] = np.concatenate([b_vals, a_vals])
    out = BoundaryMatrixC(C, P1)
    if out.residual() > check_tol:
        raise InvariantViolation(f"C^T diag(P1,-P1) C != diag(I,-I) (residual {out.residual():.3e})")
    return out


# ---------------------------------------------------------------------------
# even / odd decomposition on ]-1/2, 1/2[^N


def _check_symmetric(grid):
    for ch in grid.channels:
        if ch.kind != "bounded" or not np.allclose(ch.edges, -ch.edges[::-1], atol=1e-12):
            raise GridMismatchError("even/odd split needs grids symmetric about 0")


def even_odd_split(u):
    _check_symmetric(u.grid)
    reflected = np.concatenate([c[::-1] for c in u.channels()])
    even = 0.5 * (u.values + reflected)
    return GridFunction(u.grid, even), GridFunction(u.grid, u.values - even)


def even_odd_bc(M):
    """Boundary matrix ``(M+I  M-I)`` acting on ``(u_even(1/2), u_odd(1/2))``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError("even/odd boundary conditions need a square M")
    eye = np.eye(M.shape[0])
    return np.hstack([M + eye, M - eye])
