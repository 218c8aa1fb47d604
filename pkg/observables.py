"""Moment q(t) = ∫ u ω dx, its trace identity, and inequality diagnostics."""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from errors import PreconditionError, UndefinedRatioError
from mesh import GridFunction, TimeSeries, cumulative_integral, quad_values
from omega import TestFunction, check_membership, kernel
from solver import BoundarySet, SourceSplit, Trajectory, norm_X
from utils import Logger

DEFAULT_DISC_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class MomentSeries:
    q: TimeSeries
    qprime_fd: TimeSeries
    qprime_identity: TimeSeries

    def identity_error(self) -> float:
        return float(np.max(np.abs(self.qprime_identity.values - self.qprime_fd.values)))


@dataclass
class InequalityReport:
    min_margin: float
    argmin_t: float
    tol: float
    passed: bool
    margins: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> Dict:
        return {
            'min_margin': float(self.min_margin),
            'argmin_t': float(self.argmin_t),
            'tol': float(self.tol),
            'pass': bool(self.passed),
        }


def _require_member(omega: TestFunction):
    report = check_membership(omega)
    if not report.passed:
        raise PreconditionError(
            "test function outside the admissible set: " + ", ".join(report.failures), "observables"
        )


def moment_q(traj: Trajectory, omega: TestFunction) -> TimeSeries:
    _require_member(omega)
    values = quad_values(traj.u * omega(traj.grid.nodes), traj.grid.dx)
    return TimeSeries(traj.timegrid, values)


def time_derivative(series: TimeSeries) -> TimeSeries:
    """Centred differences inside, second-order one-sided at both ends."""
    values = series.values
    if values.shape[0] < 3:
        slope = (values[-1] - values[0]) / series.timegrid.dt
        return TimeSeries(series.timegrid, np.full_like(values, slope))
    return TimeSeries(series.timegrid, np.gradient(values, series.timegrid.dt, edge_order=2))


def qprime_identity(traj: Trajectory, bset: Optional[BoundarySet], h: Optional[TimeSeries],
                    f: Optional[SourceSplit], omega: TestFunction,
                    include_nonlinearity: bool = False, printed: bool = False) -> TimeSeries:
    """Right side r(t) of the moment balance q'(t) = r(t).

    r = ω''(L)h - ω'''(L)h4 + ω'''(0)h3 + (ω''''(L) - ω''(L))h2 - ω''''(0)h1
        + ∫f1 ω - ∫f2 ω' + ∫u(ω' + ω''' - ω⁽⁵⁾)

    `printed` swaps the h1/h2 coefficients for ω''''(L)h2 - ω''''(L)h1, the
    form that only agrees when h1 = h2 = 0. `include_nonlinearity` adds the
    -u²/2 flux of the trajectory itself.
    """
    _require_member(omega)
    grid, timegrid = traj.grid, traj.timegrid
    L, dx = omega.L, grid.dx
    zeros = np.zeros(timegrid.size)
    h1, h2, h3, h4 = (bset.as_array().T if bset is not None else (zeros,) * 4)
    hv = h.values if h is not None else zeros

    w2L, w3L, w4L = omega(L, 2), omega(L, 3), omega(L, 4)
    w30, w40 = omega(0.0, 3), omega(0.0, 4)
    r = w2L * hv - w3L * h4 + w30 * h3
    if printed:
        r = r + w4L * h2 - w4L * h1
    else:
        r = r + (w4L - w2L) * h2 - w40 * h1

    x = grid.nodes
    if f is not None:
        r = r + quad_values(f.f1 * omega(x), dx)
        if f.has_f2:
            r = r - quad_values(f.f2 * omega(x, 1), dx)
    if include_nonlinearity:
        r = r + quad_values(0.5 * traj.u ** 2 * omega(x, 1), dx)
    r = r + quad_values(traj.u * kernel(omega, grid), dx)
    return TimeSeries(timegrid, r)


def moment_series(traj: Trajectory, bset: Optional[BoundarySet], h: Optional[TimeSeries],
                  f: Optional[SourceSplit], omega: TestFunction,
                  include_nonlinearity: bool = False) -> MomentSeries:
    q = moment_q(traj, omega)
    return MomentSeries(q, time_derivative(q),
                        qprime_identity(traj, bset, h, f, omega, include_nonlinearity))


def _time_l2(values: np.ndarray, dt: float) -> float:
    return float(np.sqrt(max(float(quad_values(np.asarray(values) ** 2, dt)), 0.0)))


def energy_check(traj: Trajectory, h: TimeSeries, f1: Optional[np.ndarray],
                 tol: float = DEFAULT_DISC_TOLERANCE) -> InequalityReport:
    """Margin RHS(t) - ||u(t)||² of the energy inequality for zero initial and side data."""
    if np.any(traj.u[0] != 0.0):
        raise PreconditionError("energy inequality needs a zero initial state", "observables")
    if traj.boundary_data is not None and np.any(traj.boundary_data[:, :4] != 0.0):
        raise PreconditionError("energy inequality needs h1 = h2 = h3 = h4 = 0", "observables")

    dx, dt = traj.grid.dx, traj.timegrid.dt
    energy = quad_values(traj.u ** 2, dx)
    work = np.zeros(traj.timegrid.size)
    if f1 is not None:
        work = 2.0 * quad_values(np.asarray(f1) * traj.u, dx)
    rhs = cumulative_integral(h.values ** 2 + work, dt)
    margins = rhs - energy
    k = int(np.argmin(margins))
    report = InequalityReport(float(margins[k]), float(traj.timegrid.times[k]), tol,
                              bool(margins[k] >= -tol), margins)
    if not report.passed:
        Logger.warning(f"energy inequality violated by {-report.min_margin:.3e} at t={report.argmin_t:.4f}")
    return report


def decay_report(traj: Trajectory, tol: float = 1e-8) -> InequalityReport:
    norms = np.sqrt(np.maximum(quad_values(traj.u ** 2, traj.grid.dx), 0.0))
    margins = np.concatenate([[0.0], norms[:-1] - norms[1:]])
    k = int(np.argmin(margins))
    return InequalityReport(float(margins[k]), float(traj.timegrid.times[k]), tol,
                            bool(margins[k] >= -tol), margins)


def gn_ratio(traj: Trajectory) -> float:
    """||u²||_{L2(Q_T)} / ((T^1/2 + T^1/4) ||u||_X²)."""
    x_norm = norm_X(traj)
    if x_norm == 0.0:
        raise UndefinedRatioError("ratio undefined for the zero trajectory", "observables")
    T = traj.timegrid.T
    square = _time_l2(np.sqrt(np.maximum(quad_values(traj.u ** 4, traj.grid.dx), 0.0)),
                      traj.timegrid.dt)
    return square / ((np.sqrt(T) + T ** 0.25) * x_norm ** 2)


def data_norm(u0: Optional[GridFunction], bset: Optional[BoundarySet], h: Optional[TimeSeries],
              f: Optional[SourceSplit], dt: float) -> float:
    total = 0.0
    if u0 is not None:
        total += float(np.sqrt(max(float(quad_values(u0.values ** 2, u0.grid.dx)), 0.0)))
    if bset is not None:
        total += sum(_time_l2(col, dt) for col in bset.as_array().T)
    if h is not None:
        total += _time_l2(h.values, dt)
    if f is not None:
        total += _time_l2(np.sqrt(np.maximum(quad_values(f.f1 ** 2, f.grid.dx), 0.0)), dt)
        if f.has_f2:
            total += _time_l2(np.sqrt(np.maximum(quad_values(f.f2 ** 2, f.grid.dx), 0.0)), dt)
    return total


def qprime_bound_constant(traj: Trajectory, bset: Optional[BoundarySet], h: Optional[TimeSeries],
                          f: Optional[SourceSplit], omega: TestFunction) -> float:
    """Measured C in ||q'||_{L2(0,T)} <= C (data norms)."""
    r = qprime_identity(traj, bset, h, f, omega)
    size = data_norm(traj.at(0), bset, h, f, traj.timegrid.dt)
    if size == 0.0:
        raise UndefinedRatioError("bound constant undefined for zero data", "observables")
    return _time_l2(r.values, traj.timegrid.dt) / size
