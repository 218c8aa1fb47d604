"""Uniform grids, composite quadrature and LAPACK band LU used by every other module."""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack

from errors import ArgumentError, ConfigurationError, SingularMatrixError

MIN_INTERIOR_NODES = 16
PIVOT_TOLERANCE = 1e-13


@dataclass(frozen=True, eq=False)
class Grid:
    L: float
    N: int
    dx: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigurationError(f"domain length must be positive, got L={self.L}", "mesh")
        if int(self.N) != self.N or self.N < MIN_INTERIOR_NODES:
            raise ConfigurationError(
                f"need at least {MIN_INTERIOR_NODES} interior nodes, got N={self.N}", "mesh"
            )
        object.__setattr__(self, 'N', int(self.N))
        object.__setattr__(self, 'L', float(self.L))
        object.__setattr__(self, 'dx', self.L / (self.N + 1))
        nodes = np.linspace(0.0, self.L, self.N + 2)
        nodes.setflags(write=False)
        object.__setattr__(self, 'nodes', nodes)

    @property
    def size(self) -> int:
        return self.N + 2

    def key(self):
        return (self.L, self.N)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True, eq=False)
class TimeGrid:
    T: float
    M: int
    dt: float = field(init=False)
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError(f"time horizon must be positive, got T={self.T}", "mesh")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"need at least one time step, got M={self.M}", "mesh")
        object.__setattr__(self, 'M', int(self.M))
        object.__setattr__(self, 'T', float(self.T))
        object.__setattr__(self, 'dt', self.T / self.M)
        times = np.linspace(0.0, self.T, self.M + 1)
        times.setflags(write=False)
        object.__setattr__(self, 'times', times)

    @property
    def size(self) -> int:
        return self.M + 1

    def key(self):
        return (self.T, self.M)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


class Grids(NamedTuple):
    space: Grid
    time: TimeGrid


def _frozen_copy(values, expected: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != expected:
        raise ArgumentError(f"{what} needs {expected} values, got shape {arr.shape}", "mesh")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_copy(self.values, self.grid.size, "grid function"))

    @classmethod
    def zeros(cls, grid: Grid) -> 'GridFunction':
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def from_callable(cls, grid: Grid, func) -> 'GridFunction':
        return cls(grid, np.broadcast_to(func(grid.nodes), grid.nodes.shape))


@dataclass(frozen=True, eq=False)
class TimeSeries:
    timegrid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_copy(self.values, self.timegrid.size, "time series"))

    @classmethod
    def zeros(cls, timegrid: TimeGrid) -> 'TimeSeries':
        return cls(timegrid, np.zeros(timegrid.size))

    @classmethod
    def from_callable(cls, timegrid: TimeGrid, func) -> 'TimeSeries':
        return cls(timegrid, np.broadcast_to(func(timegrid.times), timegrid.times.shape))

    def __add__(self, other: 'TimeSeries') -> 'TimeSeries':
        return TimeSeries(self.timegrid, self.values + other.values)

    def __sub__(self, other: 'TimeSeries') -> 'TimeSeries':
        return TimeSeries(self.timegrid, self.values - other.values)

    def scale(self, factor: float) -> 'TimeSeries':
        return TimeSeries(self.timegrid, factor * self.values)


def make_grid(L: float, N: int) -> Grid:
    return Grid(L, N)


def make_timegrid(T: float, M: int) -> TimeGrid:
    return TimeGrid(T, M)


def quad_weights(n: int, h: float) -> np.ndarray:
    # Simpson for an odd node count, trapezoid otherwise
    if n < 2:
        raise ArgumentError(f"quadrature needs at least two nodes, got {n}", "mesh")
    w = np.ones(n)
    if n % 2 == 1:
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * (h / 3.0)
    w[0] = w[-1] = 0.5
    return w * h


def quad_values(values: np.ndarray, h: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values @ quad_weights(values.shape[-1], h)


def quad(f: GridFunction) -> float:
    return float(quad_values(f.values, f.grid.dx))


def cumulative_integral(values: np.ndarray, dt: float, initial: float = 0.0) -> np.ndarray:
    """Running integral of uniformly sampled values.

    Each interval uses the three-point rule through the neighbouring sample,
    so the running sum is exact for quadratics.
    """
    f = np.asarray(values, dtype=float)
    n = f.shape[0]
    out = np.empty(n)
    out[0] = initial
    if n == 1:
        return out
    if n == 2:
        out[1] = initial + 0.5 * dt * (f[0] + f[1])
        return out
    pieces = np.empty(n - 1)
    pieces[:-1] = (5.0 * f[:-2] + 8.0 * f[1:-1] - f[2:]) * dt / 12.0
    pieces[-1] = (-f[-3] + 8.0 * f[-2] + 5.0 * f[-1]) * dt / 12.0
    out[1:] = initial + np.cumsum(pieces)
    return out


class BandedMatrix:
    """Square band matrix, row-major storage: entry (i, j) lives at data[i, j - i + kl]."""

    def __init__(self, n: int, kl: int, ku: int, data: np.ndarray):
        if not (0 <= kl < n and 0 <= ku < n):
            raise ArgumentError(f"bandwidths ({kl}, {ku}) incompatible with n={n}", "mesh")
        data = np.asarray(data, dtype=float)
        if data.shape != (n, kl + ku + 1):
            raise ArgumentError(f"band storage shape {data.shape} != {(n, kl + ku + 1)}", "mesh")
        self.n = n
        self.kl = kl
        self.ku = ku
        self.data = data

    @classmethod
    def from_dense(cls, A: np.ndarray, kl: int, ku: int) -> 'BandedMatrix':
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        data = np.zeros((n, kl + ku + 1))
        for i in range(n):
            lo, hi = max(0, i - kl), min(n, i + ku + 1)
            data[i, lo - i + kl:hi - i + kl] = A[i, lo:hi]
        return cls(n, kl, ku, data)

    @classmethod
    def identity(cls, n: int, kl: int = 0, ku: int = 0) -> 'BandedMatrix':
        data = np.zeros((n, kl + ku + 1))
        data[:, kl] = 1.0
        return cls(n, kl, ku, data)

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i in range(self.n):
            lo, hi = max(0, i - self.kl), min(self.n, i + self.ku + 1)
            A[i, lo:hi] = self.data[i, lo - i + self.kl:hi - i + self.kl]
        return A

    def to_lapack(self) -> np.ndarray:
        """gbtrf layout: A[i, j] at ab[kl + ku + i - j, j], with kl spare rows on top for fill-in."""
        n, kl, ku = self.n, self.kl, self.ku
        ab = np.zeros((2 * kl + ku + 1, n), order='F')
        rows = np.arange(n)
        for col in range(kl + ku + 1):
            offset = col - kl
            keep = (rows + offset >= 0) & (rows + offset < n)
            ab[kl + ku - offset, rows[keep] + offset] = self.data[keep, col]
        return ab

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.zeros(self.n)
        for offset in range(-self.kl, self.ku + 1):
            col = offset + self.kl
            lo, hi = max(0, -offset), min(self.n, self.n - offset)
            y[lo:hi] += self.data[lo:hi, col] * x[lo + offset:hi + offset]
        return y

    def norm_inf(self) -> float:
        return float(np.max(np.sum(np.abs(self.data), axis=1)))


class BandedLU:
    """LAPACK gbtrf factorisation of a band matrix, reused by every `solve`.

    `lu` is in LAPACK band layout (2*kl + ku + 1 rows); the diagonal of U
    sits on row kl + ku.
    """

    def __init__(self, A: BandedMatrix):
        self.n, self.kl, self.ku = A.n, A.kl, A.ku
        lu, piv, info = lapack.dgbtrf(A.to_lapack(), A.kl, A.ku)
        if info < 0:
            raise ArgumentError(f"dgbtrf rejected argument {-info}", "mesh")
        diagonal = np.abs(lu[A.kl + A.ku])
        tol = PIVOT_TOLERANCE * A.norm_inf()
        small = np.flatnonzero(~(diagonal > tol))
        if small.size:
            k = int(small[0])
            raise SingularMatrixError(f"pivot {diagonal[k]:.3e} below tolerance {tol:.3e} at column {k}",
                                      pivot_index=k)
        self.lu = lu
        self.piv = piv

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.n,):
            raise ArgumentError(f"right-hand side needs shape ({self.n},), got {b.shape}", "mesh")
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, b, self.piv)
        if info != 0:
            raise ArgumentError(f"dgbtrs rejected argument {-info}", "mesh")
        return x


def banded_lu_factor(A: BandedMatrix) -> BandedLU:
    return BandedLU(A)


def banded_lu_solve(A: BandedMatrix, b: np.ndarray) -> np.ndarray:
    return BandedLU(A).solve(b)
