"""Cell-centred uniform grids on interval networks and functions sampled on them.

Every channel carries its own uniform partition.  Degrees of freedom sit at
cell midpoints, so the discrete inner product is the midpoint rule and
reflection ``x -> -x`` of a grid symmetric about 0 is an exact index reversal.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError

KINDS = ("bounded", "right", "left")


@dataclass(frozen=True)
class ChannelGrid:
    """Uniform partition of one channel; ``edges`` are the cell boundaries."""

    kind: str
    edges: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("a channel grid needs at least one cell")
        steps = np.diff(edges)
        if np.any(steps <= 0):
            raise ValueError("grid edges must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("only uniform grids are supported")
        object.__setattr__(self, "edges", edges)

    @property
    def h(self):
        return (self.edges[-1] - self.edges[0]) / self.ncells

    @property
    def ncells(self):
        return self.edges.size - 1

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def same_cells(self, other, rtol=1e-12):
        return (
            self.kind == other.kind
            and self.ncells == other.ncells
            and np.allclose(self.edges, other.edges, rtol=rtol, atol=rtol)
        )

    def mapped(self, kind, slope, offset):
        """Image of this grid under ``x -> slope*x + offset`` (slope may be negative)."""
        edges = slope * self.edges + offset
        if slope < 0:
            edges = edges[::-1]
        return ChannelGrid(kind, edges)


@dataclass(frozen=True)
class Grid:
    channels: tuple
    side: str = "physical"
    horizon: float = None
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        channels = tuple(self.channels)
        object.__setattr__(self, "channels", channels)
        sizes = [c.ncells for c in channels]
        object.__setattr__(self, "offsets", np.concatenate([[0], np.cumsum(sizes)]).astype(int))

    @property
    def nchannels(self):
        return len(self.channels)

    @property
    def size(self):
        return int(self.offsets[-1])

    def slice(self, k):
        return slice(self.offsets[k], self.offsets[k + 1])

    @property
    def weights(self):
        """Quadrature weights (cell widths) for the flat dof vector."""
        return np.concatenate([np.full(c.ncells, c.h) for c in self.channels])

    @property
    def centers(self):
        return np.concatenate([c.centers for c in self.channels])

    def split(self, values):
        values = np.asarray(values)
        if values.shape[0] != self.size:
            raise GridMismatchError(f"vector of length {values.shape[0]} on a grid with {self.size} dofs")
        return [values[self.slice(k)] for k in range(self.nchannels)]

    def sample(self, func):
        """Sample ``func(k, x)`` at the cell centres of every channel."""
        return GridFunction(
            self, np.concatenate([np.asarray(func(k, c.centers), dtype=float) * np.ones(c.ncells)
                                  for k, c in enumerate(self.channels)])
        )

    def zeros(self):
        return GridFunction(self, np.zeros(self.size))

    def matches(self, other):
        return (
            self.nchannels == other.nchannels
            and all(a.same_cells(b) for a, b in zip(self.channels, other.channels))
        )


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise GridMismatchError(
                f"values of shape {self.values.shape} do not fit a grid with {self.grid.size} dofs"
            )

    def channel(self, k):
        return self.values[self.grid.slice(k)]

    def channels(self):
        return self.grid.split(self.values)

    def _check(self, other):
        if not self.grid.matches(other.grid):
            raise GridMismatchError("grid functions live on different grids")

    def inner(self, other):
        self._check(other)
        return float(np.sum(self.grid.weights * self.values * other.values))

    def norm(self):
        return float(np.sqrt(self.inner(self)))

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return GridFunction(self.grid, scalar * self.values)

    __rmul__ = __mul__
