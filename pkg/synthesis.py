"""Control synthesis for the overdetermination condition ∫ u(t,x) ω(x) dx = φ(t).

Boundary mode looks for the trace h = u_xx(t, L); internal mode for the
amplitude f0(t) of a source f = f0(t) g(t, x). Both linear problems are
fixed points of an affine map A built from the moment balance; the
nonlinear problems wrap the linear synthesis in an outer iteration that
freezes the u u_x term at the previous iterate.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from database import DatabaseManager
from errors import PreconditionError
from fixed_point import DivergenceMonitor, FixedPointResult, PicardConfig, iterate, measure_rate
from mesh import GridFunction, Grids, TimeSeries, cumulative_integral, quad_values, quad_weights
from observables import data_norm, moment_q, qprime_identity
from omega import TestFunction, check_membership, kernel
from solver import BoundarySet, SolverConfig, SourceSplit, Trajectory, norm_X, solve_linear
from utils import Logger

COMPATIBILITY_TOLERANCE = 1e-8
OVERDETERMINATION_TOLERANCE = 1e-6
DEFAULT_OUTER = PicardConfig(tol=1e-8, max_iter=50)


@dataclass(frozen=True, eq=False)
class TargetObservable:
    phi0: float
    phiprime: TimeSeries
    phi: TimeSeries = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'phi0', float(self.phi0))
        tg = self.phiprime.timegrid
        object.__setattr__(self, 'phi', TimeSeries(tg, cumulative_integral(self.phiprime.values, tg.dt, self.phi0)))

    @classmethod
    def zero(cls, timegrid) -> 'TargetObservable':
        return cls(0.0, TimeSeries.zeros(timegrid))

    def scale(self, sigma: float) -> 'TargetObservable':
        return TargetObservable(sigma * self.phi0, self.phiprime.scale(sigma))

    def __add__(self, other: 'TargetObservable') -> 'TargetObservable':
        return TargetObservable(self.phi0 + other.phi0, self.phiprime + other.phiprime)


@dataclass(frozen=True, eq=False)
class InternalControlSpec:
    g: np.ndarray
    g0: float
    g1: TimeSeries

    def source(self, f0: np.ndarray) -> np.ndarray:
        return np.asarray(f0)[:, None] * self.g


@dataclass
class SmallnessReport:
    c0: float
    T: float
    constant: float
    heuristic_T0: float
    heuristic_r: Tuple[float, float]
    gamma_threshold: float
    passed: bool

    def to_dict(self) -> Dict:
        finite = lambda v: float(v) if np.isfinite(v) else None  # noqa: E731
        return {
            'c0': self.c0,
            'T': self.T,
            'constant': self.constant,
            'heuristic_T0': finite(self.heuristic_T0),
            'heuristic_r': [finite(self.heuristic_r[0]), finite(self.heuristic_r[1])],
            'gamma_threshold': finite(self.gamma_threshold),
            'pass': self.passed,
        }


@dataclass
class SynthesisReport:
    mode: str
    control: TimeSeries
    iterations: int
    residual_history: List[float]
    measured_rate: float
    rate_r2: float
    overdetermination_residual: float
    final_l2: float = 0.0
    smallness: Optional[SmallnessReport] = None
    outer_history: List[float] = field(default_factory=list)
    outer_rate: Optional[float] = None
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def satisfied(self) -> bool:
        return self.overdetermination_residual <= OVERDETERMINATION_TOLERANCE

    def to_dict(self) -> Dict:
        payload = {
            'mode': self.mode,
            'iterations': self.iterations,
            'residual_history': [float(r) for r in self.residual_history],
            'measured_rate': self.measured_rate,
            'rate_r2': self.rate_r2,
            'overdetermination_residual': self.overdetermination_residual,
            'final_l2_residual': self.final_l2,
            'satisfied': self.satisfied,
        }
        if self.smallness is not None:
            payload['smallness'] = self.smallness.to_dict()
        if self.outer_history:
            payload['outer_history'] = [float(r) for r in self.outer_history]
            payload['outer_rate'] = self.outer_rate
        return payload


def _require_member(omega: TestFunction):
    report = check_membership(omega)
    if not report.passed:
        raise PreconditionError(
            "test function outside the admissible set: " + ", ".join(report.failures), "synthesis"
        )


def check_compatibility(u0: Optional[GridFunction], target: TargetObservable, omega: TestFunction):
    moment = 0.0 if u0 is None else float(quad_values(u0.values * omega(u0.grid.nodes), u0.grid.dx))
    if abs(moment - target.phi0) > COMPATIBILITY_TOLERANCE * (1.0 + abs(target.phi0)):
        raise PreconditionError(
            f"compatibility ∫u0 ω dx = φ(0) violated: {moment:.12g} != {target.phi0:.12g}", "synthesis"
        )


def internal_spec(g: np.ndarray, g0: float, omega: TestFunction, grids: Grids) -> InternalControlSpec:
    grid, timegrid = grids
    g = np.array(g, dtype=float)
    if g.shape != (timegrid.size, grid.size):
        raise PreconditionError(f"g needs shape {(timegrid.size, grid.size)}, got {g.shape}", "synthesis")
    if not g0 > 0:
        raise PreconditionError(f"g0 must be positive, got {g0}", "synthesis")
    g1 = quad_values(g * omega(grid.nodes), grid.dx)
    worst = float(np.min(np.abs(g1)))
    if worst < g0:
        k = int(np.argmin(np.abs(g1)))
        raise PreconditionError(
            f"|∫g ω dx| = {worst:.3e} < g0 = {g0:.3e} at t = {timegrid.times[k]:.4f}", "synthesis"
        )
    g.setflags(write=False)
    return InternalControlSpec(g, float(g0), TimeSeries(timegrid, g1))


def overdetermination_residual(traj: Trajectory, target: TargetObservable, omega: TestFunction) -> float:
    return float(np.max(np.abs(moment_q(traj, omega).values - target.phi.values)))


def relative_l2_error(control: TimeSeries, reference: TimeSeries) -> float:
    diff = control.values - reference.values
    scale = np.sqrt(np.sum(reference.values ** 2))
    if scale == 0.0:
        return float(np.sqrt(np.sum(diff ** 2)))
    return float(np.sqrt(np.sum(diff ** 2)) / scale)


def _state_term(traj: Trajectory, omega: TestFunction) -> np.ndarray:
    return quad_values(traj.u * kernel(omega, traj.grid), traj.grid.dx)


# -- boundary control ------------------------------------------------------

def apply_A_boundary(hcur: TimeSeries, target: TargetObservable, omega: TestFunction,
                     grids: Grids, cfg: Optional[SolverConfig] = None) -> TimeSeries:
    """(A h)(t) = (φ'(t) - ∫ u (ω' + ω''' - ω⁽⁵⁾) dx) / ω''(L) with u = S(0, h, 0, 0)."""
    _require_member(omega)
    cfg = cfg or SolverConfig()
    u = solve_linear(None, None, hcur, None, cfg, grids)
    curvature = omega(omega.L, 2)
    return TimeSeries(grids.time, (target.phiprime.values - _state_term(u, omega)) / curvature)


def _report(mode: str, result: FixedPointResult, traj: Trajectory, target: TargetObservable,
            omega: TestFunction, smallness: Optional[SmallnessReport] = None) -> SynthesisReport:
    return SynthesisReport(
        mode=mode,
        control=TimeSeries(traj.timegrid, result.solution),
        iterations=result.iterations,
        residual_history=result.residuals,
        measured_rate=result.rate,
        rate_r2=result.rate_r2,
        overdetermination_residual=overdetermination_residual(traj, target, omega),
        final_l2=result.final_l2,
        smallness=smallness,
        trajectory=traj,
    )


def gamma_boundary(target: TargetObservable, omega: TestFunction, grids: Grids,
                   cfg: Optional[PicardConfig] = None,
                   solver_cfg: Optional[SolverConfig] = None) -> SynthesisReport:
    """Boundary control h = Γφ steering the zero state along a target with φ(0) = 0."""
    _require_member(omega)
    cfg = cfg or PicardConfig()
    solver_cfg = solver_cfg or SolverConfig()
    if abs(target.phi0) > COMPATIBILITY_TOLERANCE:
        raise PreconditionError(f"Γ needs a shifted target with φ(0) = 0, got {target.phi0:.3e}", "synthesis")
    timegrid = grids.time

    def apply_map(h: np.ndarray) -> np.ndarray:
        return apply_A_boundary(TimeSeries(timegrid, h), target, omega, grids, solver_cfg).values

    result = iterate(apply_map, np.zeros(timegrid.size), timegrid.times, cfg, "boundary synthesis")
    traj = solve_linear(None, None, TimeSeries(timegrid, result.solution), None, solver_cfg, grids)
    Logger.info(f"boundary synthesis converged in {result.iterations} iterations, rate {result.rate:.3f}")
    return _report('control-boundary', result, traj, target, omega)


def controllable_boundary_linear(u0: Optional[GridFunction], bset: Optional[BoundarySet],
                                 f: Optional[SourceSplit], target: TargetObservable,
                                 omega: TestFunction, grids: Grids,
                                 cfg: Optional[PicardConfig] = None,
                                 solver_cfg: Optional[SolverConfig] = None) -> SynthesisReport:
    """Split u = û + v: û carries the data, v = S(0, h, 0, 0) the control."""
    _require_member(omega)
    check_compatibility(u0, target, omega)
    solver_cfg = solver_cfg or SolverConfig()
    u_hat = solve_linear(u0, bset, None, f, solver_cfg, grids)
    drift = qprime_identity(u_hat, bset, None, f, omega)
    shifted = TargetObservable(0.0, target.phiprime - drift)
    inner = gamma_boundary(shifted, omega, grids, cfg, solver_cfg)
    full = solve_linear(u0, bset, inner.control, f, solver_cfg, grids)
    inner.overdetermination_residual = overdetermination_residual(full, target, omega)
    inner.trajectory = full
    return inner


def theta_boundary_nonlinear(u0: Optional[GridFunction], bset: Optional[BoundarySet],
                             f: Optional[SourceSplit], target: TargetObservable,
                             omega: TestFunction, grids: Grids,
                             cfg: Optional[PicardConfig] = None,
                             solver_cfg: Optional[SolverConfig] = None,
                             outer: Optional[PicardConfig] = None,
                             constant: Optional[float] = None) -> SynthesisReport:
    """Outer map v -> Θv: linear boundary synthesis with the flux -v²/2 frozen."""
    check_compatibility(u0, target, omega)
    solver_cfg = solver_cfg or SolverConfig()
    grid, timegrid = grids
    f = f if f is not None else SourceSplit.zeros(grid, timegrid)
    smallness = smallness_diagnostics(u0, bset, f, target, timegrid.T, _constant(grids, solver_cfg, constant))

    def solve_frozen(v: Trajectory) -> SynthesisReport:
        return controllable_boundary_linear(u0, bset, f.with_flux(-0.5 * v.u ** 2), target, omega,
                                            grids, cfg, solver_cfg)

    return _outer_loop('control-boundary', solve_frozen, grids, target, omega, outer, smallness)


# -- internal control ------------------------------------------------------

def apply_A_internal(f0cur: TimeSeries, target: TargetObservable, spec: InternalControlSpec,
                     omega: TestFunction, grids: Grids,
                     cfg: Optional[SolverConfig] = None) -> TimeSeries:
    """(A f0)(t) = φ'(t)/g1(t) - (1/g1(t)) ∫ u (ω' + ω''' - ω⁽⁵⁾) dx with u = S(0, 0, f0 g, 0)."""
    _require_member(omega)
    cfg = cfg or SolverConfig()
    grid, timegrid = grids
    g1 = spec.g1.values
    if float(np.min(np.abs(g1))) < spec.g0:
        raise PreconditionError(f"|g1| falls below g0 = {spec.g0:.3e}", "synthesis")
    source = SourceSplit(grid, timegrid, spec.source(f0cur.values))
    u = solve_linear(None, None, None, source, cfg, grids)
    return TimeSeries(timegrid, (target.phiprime.values - _state_term(u, omega)) / g1)


def gamma_internal(target: TargetObservable, spec: InternalControlSpec, omega: TestFunction,
                   grids: Grids, cfg: Optional[PicardConfig] = None,
                   solver_cfg: Optional[SolverConfig] = None) -> SynthesisReport:
    _require_member(omega)
    cfg = cfg or PicardConfig()
    solver_cfg = solver_cfg or SolverConfig()
    if abs(target.phi0) > COMPATIBILITY_TOLERANCE:
        raise PreconditionError(f"internal Γ needs φ(0) = 0, got {target.phi0:.3e}", "synthesis")
    grid, timegrid = grids

    def apply_map(f0: np.ndarray) -> np.ndarray:
        return apply_A_internal(TimeSeries(timegrid, f0), target, spec, omega, grids, solver_cfg).values

    result = iterate(apply_map, np.zeros(timegrid.size), timegrid.times, cfg, "internal synthesis")
    source = SourceSplit(grid, timegrid, spec.source(result.solution))
    traj = solve_linear(None, None, None, source, solver_cfg, grids)
    Logger.info(f"internal synthesis converged in {result.iterations} iterations, rate {result.rate:.3f}")
    return _report('control-internal', result, traj, target, omega)


def controllable_internal_linear(u0: Optional[GridFunction], bset: Optional[BoundarySet],
                                 h: Optional[TimeSeries], spec: InternalControlSpec,
                                 target: TargetObservable, omega: TestFunction, grids: Grids,
                                 cfg: Optional[PicardConfig] = None,
                                 solver_cfg: Optional[SolverConfig] = None,
                                 extra: Optional[SourceSplit] = None) -> SynthesisReport:
    _require_member(omega)
    check_compatibility(u0, target, omega)
    solver_cfg = solver_cfg or SolverConfig()
    grid, timegrid = grids
    u_hat = solve_linear(u0, bset, h, extra, solver_cfg, grids)
    drift = qprime_identity(u_hat, bset, h, extra, omega)
    shifted = TargetObservable(0.0, target.phiprime - drift)
    inner = gamma_internal(shifted, spec, omega, grids, cfg, solver_cfg)
    f1 = spec.source(inner.control.values)
    if extra is not None:
        source = SourceSplit(grid, timegrid, extra.f1 + f1, extra.f2)
    else:
        source = SourceSplit(grid, timegrid, f1)
    full = solve_linear(u0, bset, h, source, solver_cfg, grids)
    inner.overdetermination_residual = overdetermination_residual(full, target, omega)
    inner.trajectory = full
    return inner


def theta_internal_nonlinear(u0: Optional[GridFunction], bset: Optional[BoundarySet],
                             h: Optional[TimeSeries], spec: InternalControlSpec,
                             target: TargetObservable, omega: TestFunction, grids: Grids,
                             cfg: Optional[PicardConfig] = None,
                             solver_cfg: Optional[SolverConfig] = None,
                             outer: Optional[PicardConfig] = None,
                             constant: Optional[float] = None,
                             extra: Optional[SourceSplit] = None) -> SynthesisReport:
    check_compatibility(u0, target, omega)
    solver_cfg = solver_cfg or SolverConfig()
    grid, timegrid = grids
    h = h if h is not None else TimeSeries.zeros(timegrid)
    smallness = smallness_diagnostics(u0, bset, h, target, timegrid.T, _constant(grids, solver_cfg, constant))
    fixed = extra if extra is not None else SourceSplit.zeros(grid, timegrid)

    def solve_frozen(v: Trajectory) -> SynthesisReport:
        return controllable_internal_linear(u0, bset, h, spec, target, omega, grids, cfg, solver_cfg,
                                            fixed.with_flux(-0.5 * v.u ** 2))

    return _outer_loop('control-internal', solve_frozen, grids, target, omega, outer, smallness)


def _outer_loop(mode: str, solve_frozen, grids: Grids, target: TargetObservable, omega: TestFunction,
                outer: Optional[PicardConfig], smallness: SmallnessReport) -> SynthesisReport:
    outer = outer or DEFAULT_OUTER
    if not smallness.passed:
        Logger.warning(f"smallness heuristic fails (c0={smallness.c0:.3e}); the outer iteration may diverge")
    monitor = DivergenceMonitor("nonlinear outer iteration")
    v = Trajectory.from_field(grids.space, grids.time, np.zeros((grids.time.size, grids.space.size)))
    for j in range(1, outer.max_iter + 1):
        report = solve_frozen(v)
        step = norm_X(report.trajectory - v)
        v = report.trajectory
        monitor.record(step)
        Logger.debug(f"outer iteration {j}: ||Θv - v||_X = {step:.3e}")
        if step < outer.tol:
            report.outer_history = list(monitor.history)
            report.outer_rate = measure_rate(monitor.history)[0]
            report.smallness = smallness
            report.overdetermination_residual = overdetermination_residual(v, target, omega)
            Logger.info(f"{mode}: outer iteration converged in {j} steps")
            return report
    monitor.exhausted(outer.max_iter)


# -- smallness and calibration ---------------------------------------------

def smallness_diagnostics(u0: Optional[GridFunction], bset: Optional[BoundarySet],
                          h_or_f: Union[SourceSplit, TimeSeries, None], target: TargetObservable,
                          T: float, constant: float = 1.0) -> SmallnessReport:
    """Data aggregate c0 and the heuristic horizon / ball radius.

    A SourceSplit means boundary mode (‖f‖ in L²(Q_T), ‖φ'‖ in L²); a
    TimeSeries means internal mode (‖h‖ in L², ‖φ'‖ in L¹).
    """
    dt = target.phiprime.timegrid.dt
    phiprime = target.phiprime.values
    if isinstance(h_or_f, TimeSeries):
        c0 = data_norm(u0, bset, h_or_f, None, dt)
        c0 += float(np.abs(phiprime) @ quad_weights(phiprime.size, dt))
    else:
        c0 = data_norm(u0, bset, None, h_or_f, dt)
        c0 += float(np.sqrt(max(float(phiprime ** 2 @ quad_weights(phiprime.size, dt)), 0.0)))
    C = float(constant)
    T = float(T)
    quarter = T ** 0.25
    T0 = float('inf') if c0 == 0.0 else (1.0 / (8.0 * C * C * c0)) ** 4
    lower, upper = 2.0 * C * c0, 1.0 / (4.0 * C * quarter)
    return SmallnessReport(c0, T, C, T0, (lower, upper), 1.0 / (8.0 * C * C * quarter), lower <= upper)


def _calibration_data(grids: Grids):
    grid, timegrid = grids
    x, t = grid.nodes, timegrid.times
    L, T = grid.L, timegrid.T
    bump = np.sin(np.pi * x / L)
    ramp = TimeSeries(timegrid, np.sin(np.pi * t / T))
    zero = TimeSeries.zeros(timegrid)
    yield 'initial', GridFunction(grid, bump), None, None, None
    yield 'control', None, None, TimeSeries(timegrid, np.sin(2.0 * np.pi * t / T)), None
    yield 'source', None, None, None, SourceSplit(grid, timegrid, np.outer(np.cos(np.pi * t / T), bump))
    yield 'traces', None, BoundarySet(ramp, ramp.scale(0.5), zero, zero), None, None


def _constant(grids: Grids, solver_cfg: SolverConfig, constant: Optional[float]) -> float:
    if constant is not None:
        return constant
    return calibrate_constant(grids, solver_cfg, store=DatabaseManager.from_env())


def calibrate_constant(grids: Grids, solver_cfg: Optional[SolverConfig] = None, store=None,
                       progress: bool = False) -> float:
    """Smallest C with ||S(u0, h, f, h̃)||_X <= C (data norms) over a fixed set of data."""
    solver_cfg = solver_cfg or SolverConfig()
    grid, timegrid = grids
    if store is not None:
        cached = store.get_calibration(grid.L, grid.N, timegrid.M, solver_cfg.theta)
        if cached is not None:
            return cached
    ratios = {}
    cases = list(_calibration_data(grids))
    for name, u0, bset, h, f in tqdm(cases, desc="calibration", disable=not progress):
        traj = solve_linear(u0, bset, h, f, solver_cfg, grids)
        ratios[name] = norm_X(traj) / data_norm(u0, bset, h, f, timegrid.dt)
    constant = max(ratios.values())
    Logger.info(f"calibrated C = {constant:.4g} for L={grid.L}, N={grid.N}, M={timegrid.M}")
    if store is not None:
        store.save_calibration(grid.L, grid.N, timegrid.M, solver_cfg.theta, constant, ratios)
    return constant
