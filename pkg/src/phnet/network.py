"""Interval networks, Hamiltonian densities and compatible coupling matrices."""
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .config import SAMPLED_TOL, exact_tol
from .errors import CompatibilityError, DimensionError, GridMismatchError, SingularCouplingError


@dataclass(frozen=True)
class Interval:
    """An open interval with non-empty complement.

    ``a`` is ``None`` for a left half-line ``]-inf, b[`` and ``b`` is ``None``
    for a right half-line ``]a, inf[``.  The full line is rejected.
    """

    a: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        if self.a is None and self.b is None:
            raise ValueError("the full real line is not an admissible channel")
        if self.a is not None:
            object.__setattr__(self, "a", float(self.a))
        if self.b is not None:
            object.__setattr__(self, "b", float(self.b))
        if self.a is not None and self.b is not None and not self.a < self.b:
            raise ValueError(f"bounded interval needs a < b, got ]{self.a}, {self.b}[")

    @classmethod
    def bounded(cls, a, b):
        return cls(a, b)

    @classmethod
    def right_half_line(cls, a):
        return cls(a, None)

    @classmethod
    def left_half_line(cls, b):
        return cls(None, b)

    @property
    def kind(self):
        if self.a is None:
            return "left"
        if self.b is None:
            return "right"
        return "bounded"

    @property
    def length(self):
        return self.b - self.a if self.kind == "bounded" else np.inf

    def __str__(self):
        a = "-inf" if self.a is None else f"{self.a:g}"
        b = "inf" if self.b is None else f"{self.b:g}"
        return f"]{a}, {b}["


class Classification(NamedTuple):
    n: int
    m_plus: int
    m_minus: int
    order: tuple


@dataclass(frozen=True)
class NetworkSpec:
    intervals: tuple

    def __post_init__(self):
        intervals = tuple(self.intervals)
        if not intervals:
            raise ValueError("a network needs at least one channel")
        for iv in intervals:
            if not isinstance(iv, Interval):
                raise TypeError(f"expected Interval, got {type(iv).__name__}")
        object.__setattr__(self, "intervals", intervals)

    @property
    def N(self):
        return len(self.intervals)

    def classes(self):
        """Groups of channel indices whose intervals coincide as sets."""
        groups = {}
        for k, iv in enumerate(self.intervals):
            groups.setdefault(iv, []).append(k)
        return [tuple(g) for g in groups.values()]

    @property
    def all_bounded_equal(self):
        return all(iv.kind == "bounded" for iv in self.intervals) and len(set(self.intervals)) == 1

    def permuted(self, perm):
        return NetworkSpec(tuple(self.intervals[p] for p in perm))


def classify(net):
    """Counts of bounded, right-unbounded and left-unbounded channels.

    ``order`` lists channel indices in the canonical (bounded, right, left)
    order, stable within each group.
    """
    kinds = [iv.kind for iv in net.intervals]
    order = tuple(k for kind in ("bounded", "right", "left") for k, kk in enumerate(kinds) if kk == kind)
    return Classification(kinds.count("bounded"), kinds.count("right"), kinds.count("left"), order)


def _check_square(P, N):
    P = np.asarray(P, dtype=float)
    if P.shape != (N, N):
        raise DimensionError(f"expected a {N}x{N} matrix, got shape {P.shape}")
    return P


def check_compatible(P, net, tol=None):
    """True iff ``P`` couples only channels that live on identical intervals."""
    P = _check_square(P, net.N)
    tol = exact_tol() if tol is None else tol
    threshold = tol * max(1.0, np.abs(P).max(initial=0.0))
    for j, k in zip(*np.nonzero(np.abs(P) > threshold)):
        if net.intervals[j] != net.intervals[k]:
            return False
    return True


def validate_p1(P1, net, tol=None):
    """Check that ``P1`` is symmetric, invertible and compatible; return it as an array."""
    P1 = _check_square(P1, net.N)
    tol = exact_tol() if tol is None else tol
    scale = max(1.0, np.abs(P1).max())
    if np.abs(P1 - P1.T).max() > tol * scale:
        raise ValueError("P1 must be symmetric")
    if np.linalg.svd(P1, compute_uv=False).min() <= tol * scale:
        raise SingularCouplingError("P1 must be invertible")
    if not check_compatible(P1, net, tol):
        raise CompatibilityError("P1 couples channels on different intervals")
    return P1


class PointwiseField:
    """A matrix-valued function of position, ``sample(x)`` returns shape ``(len(x), N, N)``."""

    def __init__(self, sampler, N):
        self._sampler = sampler
        self.N = N

    def sample(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        values = np.asarray(self._sampler(x), dtype=float)
        if values.shape == (self.N, self.N):
            values = np.broadcast_to(values, (x.size, self.N, self.N))
        if values.shape != (x.size, self.N, self.N):
            raise DimensionError(f"field sampler returned shape {values.shape}")
        return values

    @classmethod
    def constant(cls, matrix):
        matrix = np.array(matrix, dtype=float, ndmin=2)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionError("a constant field needs a square matrix")
        return cls(lambda x: np.broadcast_to(matrix, (x.size,) + matrix.shape), matrix.shape[0])


def as_field(obj, N):
    if obj is None:
        return None
    if isinstance(obj, PointwiseField):
        if obj.N != N:
            raise DimensionError(f"field is {obj.N}x{obj.N}, network has {N} channels")
        return obj
    if callable(obj):
        return PointwiseField(obj, N)
    field = PointwiseField.constant(obj)
    if field.N != N:
        raise DimensionError(f"matrix is {field.N}x{field.N}, network has {N} channels")
    return field


class HamiltonianField(PointwiseField):
    """Symmetric, uniformly positive definite density with ``lower*I <= H(x) <= upper*I``."""

    def __init__(self, sampler, N, lower, upper, kind="callable", data=None):
        super().__init__(sampler, N)
        if not 0 < lower <= upper:
            raise ValueError(f"need 0 < lower <= upper, got {lower}, {upper}")
        self.lower = float(lower)
        self.upper = float(upper)
        self.kind = kind
        self.data = data or {}

    @staticmethod
    def _bounds(mats):
        eig = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
        return float(eig.min()), float(eig.max())

    @staticmethod
    def _stack(values):
        mats = np.array(values, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DimensionError("expected a list of square matrices")
        if np.abs(mats - np.swapaxes(mats, 1, 2)).max() > exact_tol() * max(1.0, np.abs(mats).max()):
            raise ValueError("Hamiltonian values must be symmetric")
        return mats

    @classmethod
    def constant(cls, matrix):
        mats = cls._stack([matrix])
        lo, hi = cls._bounds(mats)
        if lo <= 0:
            raise ValueError("Hamiltonian must be positive definite")
        H = mats[0]
        return cls(lambda x: np.broadcast_to(H, (x.size,) + H.shape), H.shape[0], lo, hi,
                   kind="constant", data={"value": H})

    @classmethod
    def identity(cls, N):
        return cls.constant(np.eye(N))

    @classmethod
    def piecewise_constant(cls, breakpoints, values):
        """``values[i]`` holds on ``[breakpoints[i-1], breakpoints[i])`` (right-continuous)."""
        mats = cls._stack(values)
        bps = np.asarray(breakpoints, dtype=float).ravel()
        if bps.size != mats.shape[0] - 1:
            raise DimensionError("piecewise-constant field needs len(values) == len(breakpoints) + 1")
        if np.any(np.diff(bps) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        lo, hi = cls._bounds(mats)
        if lo <= 0:
            raise ValueError("Hamiltonian must be positive definite")
        return cls(lambda x: mats[np.searchsorted(bps, x, side="right")], mats.shape[1], lo, hi,
                   kind="piecewise_constant", data={"breakpoints": bps, "values": mats})

    @classmethod
    def tabulated(cls, nodes, values):
        """Entrywise linear interpolation between tabulated matrices, constant outside."""
        mats = cls._stack(values)
        nodes = np.asarray(nodes, dtype=float).ravel()
        if nodes.size != mats.shape[0]:
            raise DimensionError("tabulated field needs one matrix per node")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        # convex combinations of SPD matrices stay within the node bounds
        lo, hi = cls._bounds(mats)
        if lo <= 0:
            raise ValueError("Hamiltonian must be positive definite")
        N = mats.shape[1]
        flat = mats.reshape(mats.shape[0], -1)

        def sampler(x):
            out = np.empty((x.size, N * N))
            for i in range(N * N):
                out[:, i] = np.interp(x, nodes, flat[:, i])
            return out.reshape(x.size, N, N)

        return cls(sampler, N, lo, hi, kind="tabulated", data={"nodes": nodes, "values": mats})

    def check(self, x, tol=SAMPLED_TOL):
        """Verify symmetry and the declared eigenvalue bounds at the sample points ``x``."""
        mats = self.sample(x)
        scale = max(1.0, self.upper)
        if np.abs(mats - np.swapaxes(mats, 1, 2)).max() > tol * scale:
            raise ValueError("Hamiltonian sample is not symmetric")
        lo, hi = self._bounds(mats)
        if lo < self.lower - tol * scale or hi > self.upper + tol * scale:
            raise ValueError(f"Hamiltonian eigenvalues [{lo}, {hi}] leave the declared range "
                             f"[{self.lower}, {self.upper}]")
        return True

    def inverse(self):
        return PointwiseField(lambda x: np.linalg.inv(self.sample(x)), self.N)


def grid_classes(grid):
    """Channels of ``grid`` grouped by identical cells (identical intervals)."""
    classes = []
    for k, ch in enumerate(grid.channels):
        for group in classes:
            if grid.channels[group[0]].same_cells(ch):
                group.append(k)
                break
        else:
            classes.append([k])
    return classes


def multiplication_matrix(field, grid, tol=SAMPLED_TOL):
    """Sparse matrix of the multiplication operator ``u(x) -> F(x) u(x)`` on ``grid``.

    Entries coupling channels on different intervals must vanish; the field is
    sampled at the shared cell centres of each class of identical channels.
    """
    field = as_field(field, grid.nchannels)
    rows, cols, vals = [], [], []
    classes = grid_classes(grid)
    for group in classes:
        x = grid.channels[group[0]].centers
        F = field.sample(x)
        outside = [k for k in range(grid.nchannels) if k not in group]
        if outside and np.abs(F[:, group][:, :, outside]).max() > tol * max(1.0, np.abs(F).max()):
            raise CompatibilityError("field couples channels that live on different intervals")
        idx = np.arange(x.size)
        for j in group:
            for k in group:
                v = F[:, j, k]
                mask = v != 0
                rows.append(grid.offsets[j] + idx[mask])
                cols.append(grid.offsets[k] + idx[mask])
                vals.append(v[mask])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    )


def weighted_inner(u, v, H):
    """Midpoint-rule approximation of the integral of ``<H(x) u(x), v(x)>``."""
    if not u.grid.matches(v.grid):
        raise GridMismatchError("u and v live on different grids")
    Hu = multiplication_matrix(H, u.grid) @ u.values
    return float(np.sum(u.grid.weights * Hu * v.values))
