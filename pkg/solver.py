"""Implicit finite-difference solution map for the Kawahara equation

    u_t + u_x + u_xxx - u_xxxxx + u u_x = f1 + (f2)_x   on (0, L)

with u(0)=h1, u(L)=h2, u_x(0)=h3, u_x(L)=h4 and the controlled trace
u_xx(L)=h.

Unknowns are the N interior values. The extended vector U holds nodes
-2..N+3; the four ghosts are affine in (u, d) with d = (h1, h2, h3, h4, h),
so U = P u + Q d and one time step is a single banded solve with kl = ku = 3.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from errors import ArgumentError, NonConvergenceError, SingularMatrixError, SolverBreakdownError
from mesh import BandedMatrix, Grid, GridFunction, Grids, TimeGrid, TimeSeries, banded_lu_factor, quad_values
from utils import Logger, write_csv

BANDWIDTH = 3
GHOSTS = 2
DATA_COLUMNS = ('h1', 'h2', 'h3', 'h4', 'h')


@dataclass(frozen=True, eq=False)
class BoundarySet:
    h1: TimeSeries
    h2: TimeSeries
    h3: TimeSeries
    h4: TimeSeries

    def __post_init__(self):
        grids = {s.timegrid for s in (self.h1, self.h2, self.h3, self.h4)}
        if len(grids) != 1:
            raise ArgumentError("boundary traces live on different time grids", "solver")
        for name in ('h1', 'h2', 'h3', 'h4'):
            if not np.all(np.isfinite(getattr(self, name).values)):
                raise ArgumentError(f"boundary trace {name} has non-finite values", "solver")

    @property
    def timegrid(self) -> TimeGrid:
        return self.h1.timegrid

    @classmethod
    def zeros(cls, timegrid: TimeGrid) -> 'BoundarySet':
        z = TimeSeries.zeros(timegrid)
        return cls(z, z, z, z)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.h1.values, self.h2.values, self.h3.values, self.h4.values])

    def is_zero(self) -> bool:
        return not np.any(self.as_array())


@dataclass(frozen=True, eq=False)
class SourceSplit:
    grid: Grid
    timegrid: TimeGrid
    f1: np.ndarray
    f2: Optional[np.ndarray] = None

    def __post_init__(self):
        shape = (self.timegrid.size, self.grid.size)
        f1 = np.array(self.f1, dtype=float)
        if f1.shape != shape:
            raise ArgumentError(f"f1 needs shape {shape}, got {f1.shape}", "solver")
        f1.setflags(write=False)
        object.__setattr__(self, 'f1', f1)
        if self.f2 is not None:
            f2 = np.array(self.f2, dtype=float)
            if f2.shape != shape:
                raise ArgumentError(f"f2 needs shape {shape}, got {f2.shape}", "solver")
            f2.setflags(write=False)
            object.__setattr__(self, 'f2', f2)

    @property
    def has_f2(self) -> bool:
        return self.f2 is not None

    @classmethod
    def zeros(cls, grid: Grid, timegrid: TimeGrid) -> 'SourceSplit':
        return cls(grid, timegrid, np.zeros((timegrid.size, grid.size)))

    def with_flux(self, extra_f2: np.ndarray) -> 'SourceSplit':
        base = self.f2 if self.has_f2 else 0.0
        return SourceSplit(self.grid, self.timegrid, self.f1, base + extra_f2)

    def f2_or_zeros(self) -> np.ndarray:
        if self.has_f2:
            return self.f2
        return np.zeros_like(self.f1)


@dataclass(frozen=True)
class SolverConfig:
    theta: float = 0.5
    picard_tol: float = 1e-10
    picard_max: int = 50
    dt: Optional[float] = None

    # coefficients of u_x, u_xxx and u_xxxxx; not configurable
    ADVECTION = 1.0
    DISPERSION3 = 1.0
    DISPERSION5 = -1.0

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ArgumentError(f"theta must lie in [0.5, 1], got {self.theta}", "solver")
        if not self.picard_tol > 0:
            raise ArgumentError("picard_tol must be positive", "solver")
        if self.picard_max < 1:
            raise ArgumentError("picard_max must be at least 1", "solver")
        if self.dt is not None and not self.dt > 0:
            raise ArgumentError("dt must be positive", "solver")


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: Grid
    timegrid: TimeGrid
    u: np.ndarray
    uxx0: TimeSeries
    uxxL: TimeSeries
    config: SolverConfig = field(default_factory=SolverConfig)
    boundary_data: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.shape != (self.timegrid.size, self.grid.size):
            raise ArgumentError(f"trajectory shape {u.shape} does not match the grids", "solver")
        u.setflags(write=False)
        object.__setattr__(self, 'u', u)

    @property
    def grids(self) -> Grids:
        return Grids(self.grid, self.timegrid)

    def at(self, m: int) -> GridFunction:
        return GridFunction(self.grid, self.u[m])

    @classmethod
    def from_field(cls, grid: Grid, timegrid: TimeGrid, u: np.ndarray,
                   config: Optional[SolverConfig] = None) -> 'Trajectory':
        """Wrap a sampled field; endpoint curvature from one-sided second differences."""
        u = np.asarray(u, dtype=float)
        dx2 = grid.dx ** 2
        uxx0 = (2.0 * u[:, 0] - 5.0 * u[:, 1] + 4.0 * u[:, 2] - u[:, 3]) / dx2
        uxxL = (2.0 * u[:, -1] - 5.0 * u[:, -2] + 4.0 * u[:, -3] - u[:, -4]) / dx2
        return cls(grid, timegrid, u, TimeSeries(timegrid, uxx0), TimeSeries(timegrid, uxxL),
                   config or SolverConfig())

    def __sub__(self, other: 'Trajectory') -> 'Trajectory':
        return Trajectory(self.grid, self.timegrid, self.u - other.u,
                          self.uxx0 - other.uxx0, self.uxxL - other.uxxL, self.config)


def _closure_rows(N: int, dx: float) -> np.ndarray:
    """Rows of R = [P | Q] mapping (u, d) to the extended vector U on nodes -2..N+3."""
    R = np.zeros((N + 6, N + 5))
    e = lambda j: j + GHOSTS  # noqa: E731
    for j in range(1, N + 1):
        R[e(j), j - 1] = 1.0
    d = {name: N + k for k, name in enumerate(DATA_COLUMNS)}
    R[e(0), d['h1']] = 1.0
    R[e(N + 1), d['h2']] = 1.0

    # fourth-order u_x(0) = h3 together with a vanishing sixth difference
    R[e(-1)] = 0.5 * (-15.0 * R[e(0)] + 28.0 * R[e(1)] - 16.0 * R[e(2)]
                      + 6.0 * R[e(3)] - R[e(4)])
    R[e(-1), d['h3']] -= 6.0 * dx
    R[e(-2)] = 8.0 * R[e(-1)] - 8.0 * R[e(1)] + R[e(2)]
    R[e(-2), d['h3']] += 12.0 * dx

    # fourth-order u_x(L) = h4 and u_xx(L) = h
    R[e(N + 2)] = 0.25 * R[e(N - 1)] - 3.0 * R[e(N)] + 3.75 * R[e(N + 1)]
    R[e(N + 2), d['h']] += 1.5 * dx * dx
    R[e(N + 2), d['h4']] -= 1.5 * dx
    R[e(N + 3)] = R[e(N - 1)] - 8.0 * R[e(N)] + 8.0 * R[e(N + 2)]
    R[e(N + 3), d['h4']] -= 12.0 * dx
    return R


def _spatial_operator(N: int, dx: float) -> np.ndarray:
    """-(D1 + D3 - D5) acting on the extended vector, one row per interior node."""
    D = np.zeros((N, N + 6))
    d1 = np.array([-1.0, 0.0, 1.0]) / (2.0 * dx)
    d3 = np.array([-1.0, 2.0, 0.0, -2.0, 1.0]) / (2.0 * dx ** 3)
    d5 = np.array([-1.0, 4.0, -5.0, 0.0, 5.0, -4.0, 1.0]) / (2.0 * dx ** 5)
    for i in range(1, N + 1):
        c = i + GHOSTS
        D[i - 1, c - 1:c + 2] -= SolverConfig.ADVECTION * d1
        D[i - 1, c - 2:c + 3] -= SolverConfig.DISPERSION3 * d3
        D[i - 1, c - 3:c + 4] -= SolverConfig.DISPERSION5 * d5
    return D


class KawaharaOperator:
    """Semi-discrete operator u' = K u + B d + F with its θ-step factorisation."""

    def __init__(self, grid: Grid, dt: float, theta: float):
        N, dx = grid.N, grid.dx
        self.grid = grid
        self.dt = dt
        self.theta = theta
        self.R = _closure_rows(N, dx)
        D = _spatial_operator(N, dx)
        self.K = D @ self.R[:, :N]
        self.B = D @ self.R[:, N:]
        lhs = np.eye(N) - theta * dt * self.K
        self.lhs = BandedMatrix.from_dense(lhs, BANDWIDTH, BANDWIDTH)
        if not np.array_equal(self.lhs.to_dense(), lhs):
            raise ArgumentError("step matrix leaks outside the assumed band", "solver")
        self.factor = banded_lu_factor(self.lhs)

    def extend(self, interior: np.ndarray, d: np.ndarray) -> np.ndarray:
        return self.R @ np.concatenate([interior, d])

    def traces(self, interior: np.ndarray, d: np.ndarray) -> Tuple[float, ...]:
        U = self.extend(interior, d)
        dx = self.grid.dx
        g = GHOSTS
        n1 = self.grid.N + 1 + g
        ux0 = (U[g - 2] - 8.0 * U[g - 1] + 8.0 * U[g + 1] - U[g + 2]) / (12.0 * dx)
        uxL = (U[n1 - 2] - 8.0 * U[n1 - 1] + 8.0 * U[n1 + 1] - U[n1 + 2]) / (12.0 * dx)
        uxx0 = (-U[g - 2] + 16.0 * U[g - 1] - 30.0 * U[g] + 16.0 * U[g + 1] - U[g + 2]) / (12.0 * dx * dx)
        uxxL = (-U[n1 - 2] + 16.0 * U[n1 - 1] - 30.0 * U[n1] + 16.0 * U[n1 + 1] - U[n1 + 2]) / (12.0 * dx * dx)
        return U[g], U[n1], ux0, uxL, uxx0, uxxL


@lru_cache(maxsize=32)
def _cached_operator(L: float, N: int, dt: float, theta: float) -> KawaharaOperator:
    return KawaharaOperator(Grid(L, N), dt, theta)


def assemble(grid: Grid, dt: float, theta: float) -> KawaharaOperator:
    try:
        return _cached_operator(grid.L, grid.N, float(dt), float(theta))
    except SingularMatrixError as e:
        raise SolverBreakdownError(f"singular step matrix: {e.message}", step=1) from e


def centered_dx(values: np.ndarray, dx: float) -> np.ndarray:
    return (values[..., 2:] - values[..., :-2]) / (2.0 * dx)


def _check_grids(grids: Grids, u0: GridFunction, bset: BoundarySet, h: TimeSeries,
                 f: SourceSplit, cfg: SolverConfig):
    grid, timegrid = grids
    if u0.grid != grid or f.grid != grid:
        raise ArgumentError("data and grid disagree on the spatial mesh", "solver")
    if bset.timegrid != timegrid or h.timegrid != timegrid or f.timegrid != timegrid:
        raise ArgumentError("data and grid disagree on the time mesh", "solver")
    if cfg.dt is not None and not np.isclose(cfg.dt, timegrid.dt, rtol=1e-12, atol=0.0):
        raise ArgumentError(f"config dt={cfg.dt} differs from time grid dt={timegrid.dt}", "solver")


def _defaults(grids: Grids, u0, bset, h, f):
    grid, timegrid = grids
    u0 = u0 if u0 is not None else GridFunction.zeros(grid)
    bset = bset if bset is not None else BoundarySet.zeros(timegrid)
    h = h if h is not None else TimeSeries.zeros(timegrid)
    f = f if f is not None else SourceSplit.zeros(grid, timegrid)
    return u0, bset, h, f


def _march(grids: Grids, u0: GridFunction, bset: BoundarySet, h: TimeSeries, f: SourceSplit,
           cfg: SolverConfig, nonlinear: bool) -> Trajectory:
    grid, timegrid = grids
    _check_grids(grids, u0, bset, h, f, cfg)
    op = assemble(grid, timegrid.dt, cfg.theta)
    dt, theta, dx = timegrid.dt, cfg.theta, grid.dx
    M, N = timegrid.M, grid.N

    data = np.column_stack([bset.as_array(), h.values])
    forcing = f.f1[:, 1:-1] + centered_dx(f.f2_or_zeros(), dx)
    G = data @ op.B.T + forcing

    def flux(interior, m):
        full = np.concatenate([[data[m, 0]], interior, [data[m, 1]]])
        return -centered_dx(0.5 * full * full, dx)

    u = np.zeros((M + 1, N + 2))
    uxx0 = np.zeros(M + 1)
    uxxL = np.zeros(M + 1)
    current = np.array(u0.values[1:-1], dtype=float)
    for m in range(M + 1):
        if m > 0:
            explicit = current + (1.0 - theta) * dt * (op.K @ current + G[m - 1]) + theta * dt * G[m]
            if nonlinear:
                lagged = (1.0 - theta) * dt * flux(current, m - 1)
                iterate = current
                for k in range(1, cfg.picard_max + 1):
                    nxt = op.factor.solve(explicit + lagged + theta * dt * flux(iterate, m))
                    change = float(np.max(np.abs(nxt - iterate)))
                    iterate = nxt
                    if not np.isfinite(change):
                        raise SolverBreakdownError("non-finite state in the nonlinear step", step=m)
                    if change < cfg.picard_tol:
                        break
                else:
                    raise NonConvergenceError(
                        f"inner Picard loop exceeded picard_max={cfg.picard_max}", step=m, residual=change
                    )
                current = iterate
            else:
                current = op.factor.solve(explicit)
            if not np.all(np.isfinite(current)):
                raise SolverBreakdownError("non-finite state", step=m)
        u[m, 0] = data[m, 0]
        u[m, 1:-1] = current
        u[m, -1] = data[m, 1]
        traces = op.traces(current, data[m])
        uxx0[m] = traces[4]
        uxxL[m] = traces[5]

    return Trajectory(grid, timegrid, u, TimeSeries(timegrid, uxx0), TimeSeries(timegrid, uxxL),
                      cfg, boundary_data=data)


def solve_linear(u0: Optional[GridFunction], bset: Optional[BoundarySet], h: Optional[TimeSeries],
                 f: Optional[SourceSplit], cfg: SolverConfig, grids: Grids) -> Trajectory:
    u0, bset, h, f = _defaults(grids, u0, bset, h, f)
    return _march(grids, u0, bset, h, f, cfg, nonlinear=False)


def solve_nonlinear(u0: Optional[GridFunction], bset: Optional[BoundarySet], h: Optional[TimeSeries],
                    f: Optional[SourceSplit], cfg: SolverConfig, grids: Grids) -> Trajectory:
    u0, bset, h, f = _defaults(grids, u0, bset, h, f)
    Logger.debug(f"nonlinear solve N={grids.space.N} M={grids.time.M} theta={cfg.theta}")
    return _march(grids, u0, bset, h, f, cfg, nonlinear=True)


def boundary_traces(traj: Trajectory) -> np.ndarray:
    if traj.boundary_data is None:
        raise ArgumentError("trajectory carries no boundary data to reconstruct from", "solver")
    op = assemble(traj.grid, traj.timegrid.dt, traj.config.theta)
    out = np.zeros((traj.timegrid.size, 5))
    for m in range(traj.timegrid.size):
        u0, uL, ux0, uxL, _, uxxL = op.traces(traj.u[m, 1:-1], traj.boundary_data[m])
        out[m] = (u0, uL, ux0, uxL, uxxL)
    return out


def second_difference(traj: Trajectory) -> np.ndarray:
    u = traj.u
    inner = (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / traj.grid.dx ** 2
    return np.column_stack([traj.uxx0.values, inner, traj.uxxL.values])


def norm_X(traj: Trajectory) -> float:
    """max_t ||u(t)||_{L2} + ||u_xx||_{L2(Q_T)}."""
    dx, dt = traj.grid.dx, traj.timegrid.dt
    sup_term = np.sqrt(np.max(np.maximum(quad_values(traj.u ** 2, dx), 0.0)))
    curvature = quad_values(second_difference(traj) ** 2, dx)
    space_time = np.sqrt(max(float(quad_values(curvature, dt)), 0.0))
    return float(sup_term + space_time)


def l2_norms(traj: Trajectory) -> np.ndarray:
    return np.sqrt(np.maximum(quad_values(traj.u ** 2, traj.grid.dx), 0.0))


def write_trajectory_csv(traj: Trajectory, path: str) -> str:
    times, nodes = traj.timegrid.times, traj.grid.nodes

    def rows():
        for m, t in enumerate(times):
            for j, x in enumerate(nodes):
                yield (t, x, traj.u[m, j])

    return write_csv(path, ['t', 'x', 'u'], rows())


def write_traces_csv(traj: Trajectory, path: str) -> str:
    rows = zip(traj.timegrid.times, traj.uxx0.values, traj.uxxL.values)
    return write_csv(path, ['t', 'uxx0', 'uxxL'], rows)
