"""Manufactured solutions, refinement studies and the seeded property suite."""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import sympy as sp
from scipy import stats
from tqdm import tqdm

from errors import ArgumentError, KawaharaError
from fixed_point import PicardConfig
from mesh import Grid, GridFunction, Grids, TimeGrid, TimeSeries
from observables import decay_report, energy_check, gn_ratio, moment_series, qprime_identity
from omega import canonical_omega
from solver import BoundarySet, SolverConfig, SourceSplit, Trajectory, solve_linear, solve_nonlinear
from synthesis import TargetObservable, apply_A_boundary, gamma_boundary
from utils import Logger, write_csv

XS, TS = sp.symbols('x t', real=True)
CASE_NAMES = ('poly-decay', 'traveling-bump', 'nonlinear-poly')
ORDER_WINDOW = (1.8, 2.3)
ENERGY_TOLERANCE = 1e-5


def _pde_terms(u: sp.Expr, nonlinear: bool) -> List[sp.Expr]:
    terms = [sp.diff(u, TS), sp.diff(u, XS), sp.diff(u, XS, 3), -sp.diff(u, XS, 5)]
    if nonlinear:
        terms.append(u * sp.diff(u, XS))
    return terms


def _vectorize(expr: sp.Expr) -> Callable:
    fn = sp.lambdify((XS, TS), expr, 'numpy')

    def evaluate(x, t):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        return np.array(np.broadcast_to(fn(x, t), x.shape), dtype=float)

    return evaluate


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    name: str
    L: float
    T: float
    exact: sp.Expr
    nonlinear: bool = False
    source: sp.Expr = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'source', sp.Add(*_pde_terms(self.exact, self.nonlinear)))

    def field_fn(self) -> Callable:
        return _vectorize(self.exact)

    def residual_check(self, points: int = 100, seed: int = 0) -> float:
        """Max |u_t + u_x + u_xxx - u_xxxxx (+ u u_x) - f| at random points."""
        rng = np.random.default_rng(seed)
        xs = rng.uniform(0.0, self.L, points)
        ts = rng.uniform(0.0, self.T, points)
        lhs = sum(_vectorize(term)(xs, ts) for term in _pde_terms(self.exact, self.nonlinear))
        return float(np.max(np.abs(lhs - _vectorize(self.source)(xs, ts))))

    def grids(self, N: int, M: Optional[int] = None) -> Grids:
        grid = Grid(self.L, N)
        if M is None:
            M = max(1, int(round(self.T / grid.dx)))
        return Grids(grid, TimeGrid(self.T, M))

    def materialize(self, grids: Grids):
        """(u0, boundary traces, control trace, source, exact field) on the grids."""
        grid, timegrid = grids
        xs, ts = grid.nodes, timegrid.times
        Xg, Tg = np.meshgrid(xs, ts)
        exact = self.field_fn()(Xg, Tg)
        f1 = _vectorize(self.source)(Xg, Tg)
        ux = _vectorize(sp.diff(self.exact, XS))
        uxx = _vectorize(sp.diff(self.exact, XS, 2))
        u = self.field_fn()
        zeros, ends = np.zeros_like(ts), np.full_like(ts, self.L)
        bset = BoundarySet(TimeSeries(timegrid, u(zeros, ts)), TimeSeries(timegrid, u(ends, ts)),
                           TimeSeries(timegrid, ux(zeros, ts)), TimeSeries(timegrid, ux(ends, ts)))
        h = TimeSeries(timegrid, uxx(ends, ts))
        return GridFunction(grid, exact[0]), bset, h, SourceSplit(grid, timegrid, f1), exact


def manufactured_case(name: str, L: float = 1.0, T: float = 1.0) -> ManufacturedCase:
    if name == 'poly-decay':
        return ManufacturedCase(name, L, T, sp.exp(-TS) * XS ** 3 * (XS - L) ** 2)
    if name == 'nonlinear-poly':
        return ManufacturedCase(name, L, T, sp.exp(-TS) * XS ** 3 * (XS - L) ** 2, nonlinear=True)
    if name == 'traveling-bump':
        kappa, speed = 4.0 / L, 0.5
        centre = 0.3 * L
        profile = sp.Rational(1, 2) * sp.sech(kappa * (XS - centre - speed * TS)) ** 2
        return ManufacturedCase(name, L, T, profile)
    raise ArgumentError(f"unknown manufactured case {name!r}; choose from {', '.join(CASE_NAMES)}", "verify")


@dataclass
class ConvergenceTable:
    case: str
    rows: List[Dict] = field(default_factory=list)
    fitted_order: float = float('nan')

    def passed(self, window: Tuple[float, float] = ORDER_WINDOW) -> bool:
        return window[0] <= self.fitted_order <= window[1]

    def to_csv(self, path: str) -> str:
        order = lambda r: r['order'] if r['order'] is not None else float('nan')  # noqa: E731
        return write_csv(path, ['level', 'dx', 'dt', 'error', 'order'],
                         ((r['level'], r['dx'], r['dt'], r['error'], order(r)) for r in self.rows))

    def to_dict(self) -> Dict:
        return {'case': self.case, 'rows': self.rows, 'fitted_order': self.fitted_order,
                'pass': self.passed()}


def refinement_sizes(levels: int, N0: int = 63) -> List[int]:
    """N_k = (N0 + 1) 2^k - 1 so that dx halves exactly."""
    return [(N0 + 1) * 2 ** k - 1 for k in range(levels)]


def convergence_study(case: ManufacturedCase, levels: int, cfg: Optional[SolverConfig] = None,
                      N0: int = 63, progress: bool = False) -> ConvergenceTable:
    if levels < 3:
        raise ArgumentError(f"a convergence study needs at least 3 levels, got {levels}", "verify")
    cfg = cfg or SolverConfig()
    solve = solve_nonlinear if case.nonlinear else solve_linear
    table = ConvergenceTable(case.name)
    for level, N in enumerate(tqdm(refinement_sizes(levels, N0), desc=case.name, disable=not progress)):
        grids = case.grids(N)
        u0, bset, h, f, exact = case.materialize(grids)
        try:
            traj = solve(u0, bset, h, f, cfg, grids)
        except KawaharaError as e:
            e.message = f"level {level} (N={N}): {e.message}"
            raise
        error = float(np.max(np.abs(traj.u - exact)))
        previous = table.rows[-1]['error'] if table.rows else None
        order = float(np.log2(previous / error)) if previous else None
        table.rows.append({'level': level, 'N': N, 'M': grids.time.M, 'dx': grids.space.dx,
                           'dt': grids.time.dt, 'error': error, 'order': order})
        Logger.info(f"{case.name} level {level}: N={N} error {error:.3e}"
                    + (f" order {order:.2f}" if order is not None else ""))
    dxs = np.array([r['dx'] for r in table.rows])
    errs = np.array([r['error'] for r in table.rows])
    table.fitted_order = float(stats.linregress(np.log(dxs), np.log(errs)).slope)
    return table


# -- random data ---------------------------------------------------------------

def random_signal(rng: np.random.Generator, timegrid: TimeGrid, modes: int = 4,
                  amplitude: float = 1.0) -> TimeSeries:
    """Truncated sine series in time, vanishing at t = 0, coefficients decaying like k^-2."""
    k = np.arange(1, modes + 1)
    coeffs = rng.standard_normal(modes) / k ** 2
    basis = np.sin(np.pi * np.outer(timegrid.times, k) / timegrid.T)
    return TimeSeries(timegrid, amplitude * basis @ coeffs)


def random_field(rng: np.random.Generator, grid: Grid, timegrid: TimeGrid, modes: int = 4,
                 amplitude: float = 1.0) -> np.ndarray:
    j = np.arange(1, modes + 1)
    coeffs = rng.standard_normal((modes, modes)) / np.outer(j, j) ** 2
    space = np.sin(np.pi * np.outer(j, grid.nodes) / grid.L)
    time = np.cos(np.pi * np.outer(timegrid.times, j) / timegrid.T)
    return amplitude * time @ coeffs @ space


# -- property suite --------------------------------------------------------------

@dataclass
class PropertyResult:
    name: str
    anchor: str
    passed: bool
    margin: float
    details: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {'name': self.name, 'anchor': self.anchor, 'pass': self.passed,
                'margin': self.margin, 'details': self.details}


@dataclass
class SuiteReport:
    seed: int
    properties: List[PropertyResult]

    @property
    def all_passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def names(self) -> List[str]:
        return [p.name for p in self.properties]

    def to_dict(self) -> Dict:
        return {'seed': self.seed, 'all_pass': self.all_passed,
                'anchors': {p.name: p.anchor for p in self.properties},
                'properties': [p.to_dict() for p in self.properties]}


def _bilinear_property(rng: np.random.Generator, samples: int = 50, levels: int = 2) -> PropertyResult:
    sizes = refinement_sizes(levels, N0=31)
    stream = int(rng.integers(2 ** 32))
    maxima, spread = [], 0.0
    for N in sizes:
        grids = Grids(Grid(1.0, N), TimeGrid(1.0, N + 1))
        local = np.random.default_rng(stream)
        ratios = np.array([gn_ratio(Trajectory.from_field(grids.space, grids.time,
                                                          random_field(local, grids.space, grids.time)))
                           for _ in range(samples)])
        if not maxima:
            spread = float(np.max(ratios) / np.median(ratios))
        maxima.append(float(np.max(ratios)))
    drifts = [fine / coarse for coarse, fine in zip(maxima, maxima[1:])]
    margin = min(20.0 - spread, *(0.2 - abs(d - 1.0) for d in drifts))
    return PropertyResult('bilinear-bound', 'bilinear estimate ||u²|| <= C(T^1/2 + T^1/4)||u||_X²',
                          margin > 0, margin,
                          {'max_over_median': spread, 'refinement_drift': drifts[0],
                           'refinement_drifts': drifts, 'sizes': sizes, 'max_ratio': maxima[0]})


def _worst_energy_margin(rng: np.random.Generator, grids: Grids, cases: int) -> float:
    cfg = SolverConfig(theta=1.0)
    worst = float('inf')
    for _ in range(cases):
        h = random_signal(rng, grids.time, amplitude=0.01)
        f1 = random_field(rng, grids.space, grids.time, amplitude=0.01)
        traj = solve_linear(None, None, h, SourceSplit(grids.space, grids.time, f1), cfg, grids)
        worst = min(worst, energy_check(traj, h, f1, tol=ENERGY_TOLERANCE).min_margin)
    return worst


def _energy_property(rng: np.random.Generator, cases: int = 3, refine: bool = False) -> PropertyResult:
    label = 'energy inequality for zero initial and side data'
    if not refine:
        worst = _worst_energy_margin(rng, Grids(Grid(1.0, 31), TimeGrid(0.5, 16)), cases)
        margin = worst + ENERGY_TOLERANCE
        return PropertyResult('energy-inequality', label, margin >= 0, margin,
                              {'min_margin': worst, 'cases': cases})

    # same data on both grids; a discretisation deficit must at least halve
    stream = int(rng.integers(2 ** 32))
    deficits = {}
    for name, N in (('coarse', 63), ('fine', 127)):
        grids = Grids(Grid(1.0, N), TimeGrid(0.5, (N + 1) // 2))
        deficits[name] = max(0.0, -_worst_energy_margin(np.random.default_rng(stream), grids, cases))
    coarse, fine = deficits['coarse'], deficits['fine']
    halves = coarse <= 1e-12 or fine <= 0.5 * coarse
    margin = ENERGY_TOLERANCE - fine
    return PropertyResult('energy-inequality', label, margin >= 0 and halves, margin,
                          {'coarse_deficit': coarse, 'fine_deficit': fine, 'deficit_halves': halves,
                           'cases': cases})


def _decay_property() -> PropertyResult:
    grids = Grids(Grid(1.0, 31), TimeGrid(1.0, 32))
    u0 = GridFunction(grids.space, canonical_omega(1.0, normalize=True)(grids.space.nodes))
    traj = solve_linear(u0, None, None, None, SolverConfig(theta=1.0), grids)
    report = decay_report(traj, tol=1e-8)
    return PropertyResult('semigroup-decay', 'homogeneous contraction ||u(t)|| <= ||u0||',
                          report.passed, report.min_margin + report.tol, report.to_dict())


def _trace_property(corrupt: bool) -> PropertyResult:
    case = manufactured_case('poly-decay')
    omega = canonical_omega(case.L)
    errors = []
    for N in (31, 63):
        grids = case.grids(N)
        u0, bset, h, f, _ = case.materialize(grids)
        traj = solve_linear(u0, bset, h, f, SolverConfig(), grids)
        series = moment_series(traj, bset, h, f, omega)
        r = -series.qprime_identity.values if corrupt else series.qprime_identity.values
        scale = float(np.max(np.abs(series.qprime_fd.values)))
        errors.append(float(np.max(np.abs(r - series.qprime_fd.values))) / scale)
    order = float(np.log2(errors[0] / errors[1]))

    # h2 alone separates the two forms of the identity by exactly -ω''(L) h2
    grids = case.grids(31)
    h2 = TimeSeries(grids.time, np.sin(np.pi * grids.time.times))
    zero = TimeSeries.zeros(grids.time)
    bset = BoundarySet(zero, h2, zero, zero)
    traj = solve_linear(None, bset, None, None, SolverConfig(), grids)
    gap = (qprime_identity(traj, bset, None, None, omega).values
           - qprime_identity(traj, bset, None, None, omega, printed=True).values)
    mismatch = float(np.max(np.abs(gap + omega(omega.L, 2) * h2.values)))

    margin = min(order - 1.5, 0.1 - errors[1], 1e-12 - mismatch)
    return PropertyResult('trace-identity', 'moment balance q\' = r(t) and its printed variant',
                          margin >= 0, margin,
                          {'relative_errors': errors, 'order': order, 'printed_gap_mismatch': mismatch})


def _consistency_property(rng: np.random.Generator) -> PropertyResult:
    L = 3.0
    grids = Grids(Grid(L, 31), TimeGrid(0.25, 16))
    omega = canonical_omega(L)
    h_star = random_signal(rng, grids.time, amplitude=0.01)
    forward = solve_linear(None, None, h_star, None, SolverConfig(), grids)
    target = TargetObservable(0.0, qprime_identity(forward, None, h_star, None, omega))
    cfg = PicardConfig(tol=1e-10)
    report = gamma_boundary(target, omega, grids, cfg)
    again = apply_A_boundary(report.control, target, omega, grids)
    change = float(np.max(np.abs(again.values - report.control.values)))
    margin = 2.0 * cfg.tol - change
    return PropertyResult('fixed-point-consistency', 'φ = Λh exactly when h = Ah',
                          margin > 0, margin,
                          {'change': change, 'iterations': report.iterations,
                           'measured_rate': report.measured_rate})


def run_property_suite(seed: int = 0, corrupt_qprime_sign: bool = False,
                       progress: bool = False, full: bool = False) -> SuiteReport:
    """Every check draws from one generator seeded with `seed`; order is fixed by name.

    `full` runs the long variants: 20 energy cases with a refinement leg up to
    N=127 and a second refinement of the bilinear estimate.
    """
    rng = np.random.default_rng(seed)
    checks = [
        ('bilinear-bound', lambda: _bilinear_property(rng, levels=3 if full else 2)),
        ('energy-inequality', lambda: _energy_property(rng, cases=20 if full else 3, refine=full)),
        ('fixed-point-consistency', lambda: _consistency_property(rng)),
        ('semigroup-decay', _decay_property),
        ('trace-identity', lambda: _trace_property(corrupt_qprime_sign)),
    ]
    results = []
    for name, check in tqdm(checks, desc="properties", disable=not progress):
        try:
            results.append(check())
        except KawaharaError as e:
            Logger.error(f"property {name} raised: {e}")
            results.append(PropertyResult(name, 'error', False, float('-inf'), {'error': str(e)}))
        Logger.info(f"property {name}: {'pass' if results[-1].passed else 'FAIL'}")
    return SuiteReport(seed, results)
