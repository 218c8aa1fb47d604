"""Scenario files: pydantic models, aggregated validation and input materialisation."""
import json
import os
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from errors import ValidationError
from fixed_point import PicardConfig
from mesh import Grid, GridFunction, Grids, TimeGrid, TimeSeries, quad_values
from observables import qprime_identity
from omega import TestFunction, canonical_omega, polynomial_omega
from solver import BoundarySet, SolverConfig, SourceSplit, solve_linear, solve_nonlinear
from synthesis import InternalControlSpec, TargetObservable, internal_spec
from utils import Logger, read_csv_column

MODES = ('solve', 'control-boundary', 'control-internal', 'verify', 'convergence')
Mode = Literal['solve', 'control-boundary', 'control-internal', 'verify', 'convergence']


class _Spec(BaseModel):
    model_config = ConfigDict(extra='forbid')


class GridSpec(_Spec):
    L: float = Field(gt=0)
    N: int = Field(ge=16)
    T: float = Field(gt=0)
    M: Optional[int] = Field(default=None, ge=1)

    def build(self) -> Grids:
        grid = Grid(self.L, self.N)
        M = self.M if self.M is not None else max(1, int(round(self.T / grid.dx)))
        return Grids(grid, TimeGrid(self.T, M))


class SignalSpec(_Spec):
    """A time signal: a named preset or the last column of a CSV with M + 1 rows."""
    preset: Optional[Literal['zero', 'sine', 'cosine', 'ramp']] = None
    amplitude: float = 1.0
    frequency: float = 1.0
    csv: Optional[str] = None

    @model_validator(mode='after')
    def _one_source(self):
        if self.preset is not None and self.csv is not None:
            raise ValueError("give either preset or csv, not both")
        if self.preset is None and self.csv is None:
            self.preset = 'zero'
        return self


class FieldSpec(_Spec):
    """A spatial profile, optionally modulated in time by cos(2π t/T)."""
    preset: Optional[Literal['zero', 'sine', 'omega']] = None
    amplitude: float = 1.0
    mode: int = Field(default=1, ge=1)
    csv: Optional[str] = None

    @model_validator(mode='after')
    def _one_source(self):
        if self.preset is not None and self.csv is not None:
            raise ValueError("give either preset or csv, not both")
        if self.preset is None and self.csv is None:
            self.preset = 'zero'
        return self


class BoundarySpec(_Spec):
    h1: SignalSpec = Field(default_factory=SignalSpec)
    h2: SignalSpec = Field(default_factory=SignalSpec)
    h3: SignalSpec = Field(default_factory=SignalSpec)
    h4: SignalSpec = Field(default_factory=SignalSpec)


class OmegaSpec(_Spec):
    kind: Literal['canonical', 'polynomial'] = 'canonical'
    coefficients: Optional[List[float]] = None
    normalize: bool = False

    @model_validator(mode='after')
    def _coefficients(self):
        if self.kind == 'polynomial' and not self.coefficients:
            raise ValueError("a polynomial ω needs coefficients")
        return self


class TargetSpec(_Spec):
    # None: φ(0) = ∫u0 ω dx on the grid
    phi0: Optional[float] = None
    phiprime: Optional[SignalSpec] = None
    generate_from: Optional[SignalSpec] = None

    @model_validator(mode='after')
    def _one_source(self):
        if (self.phiprime is None) == (self.generate_from is None):
            raise ValueError("give exactly one of phiprime or generate_from")
        return self


class InternalSpec(_Spec):
    g: FieldSpec = Field(default_factory=lambda: FieldSpec(preset='omega'))
    g0: Optional[float] = Field(default=None, gt=0)


class SolverSpec(_Spec):
    theta: float = Field(default=0.5, ge=0.5, le=1.0)
    picard_tol: float = Field(default=1e-10, gt=0)
    picard_max: int = Field(default=50, ge=1)

    def build(self) -> SolverConfig:
        return SolverConfig(self.theta, self.picard_tol, self.picard_max)


class PicardSpec(_Spec):
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=200, ge=1)
    damping: float = Field(default=1.0, gt=0, le=1.0)
    gamma: float = Field(default=0.0, ge=0)
    anderson_depth: int = Field(default=0, ge=0)
    norm: Literal['sup', 'l2'] = 'sup'

    def build(self) -> PicardConfig:
        return PicardConfig(self.tol, self.max_iter, self.damping, self.gamma, self.anderson_depth, self.norm)


class VerifySpec(_Spec):
    seed: int = 0
    corrupt_qprime_sign: bool = False
    full: bool = False


class ConvergenceSpec(_Spec):
    cases: List[Literal['poly-decay', 'traveling-bump', 'nonlinear-poly']] = \
        Field(default_factory=lambda: ['poly-decay', 'nonlinear-poly'])
    levels: int = 3
    N0: int = Field(default=63, ge=16)


class Scenario(_Spec):
    mode: Mode
    grid: Optional[GridSpec] = None
    u0: Optional[FieldSpec] = None
    boundary: Optional[BoundarySpec] = None
    control: Optional[SignalSpec] = None
    source: Optional[FieldSpec] = None
    omega: Optional[OmegaSpec] = None
    target: Optional[TargetSpec] = None
    internal: Optional[InternalSpec] = None
    nonlinear: bool = False
    constant: Optional[float] = Field(default=None, gt=0)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    picard: PicardSpec = Field(default_factory=PicardSpec)
    outer: Optional[PicardSpec] = None
    verify: VerifySpec = Field(default_factory=VerifySpec)
    convergence: ConvergenceSpec = Field(default_factory=ConvergenceSpec)
    out: str = 'runs'


# -- parsing ----------------------------------------------------------------

def _format_pydantic(error: PydanticValidationError) -> List[str]:
    problems = []
    for item in error.errors():
        where = '.'.join(str(part) for part in item['loc']) or '<root>'
        problems.append(f"{where}: {item['msg']}")
    return problems


def _mode_problems(scenario: Scenario) -> List[str]:
    problems = []
    needs = {
        'solve': ('grid',),
        'control-boundary': ('grid', 'omega', 'target'),
        'control-internal': ('grid', 'omega', 'target', 'internal'),
    }.get(scenario.mode, ())
    for name in needs:
        if getattr(scenario, name) is None:
            problems.append(f"{name}: required for mode {scenario.mode}")
    if scenario.mode == 'control-boundary' and scenario.control is not None:
        problems.append("control: the boundary control is the unknown in mode control-boundary")
    if scenario.mode == 'convergence' and scenario.convergence.levels < 3:
        problems.append("convergence.levels: at least 3 levels are needed")
    return problems


def _signals(scenario: Scenario):
    if scenario.control is not None:
        yield 'control', scenario.control
    if scenario.boundary is not None:
        for name in ('h1', 'h2', 'h3', 'h4'):
            yield f'boundary.{name}', getattr(scenario.boundary, name)
    if scenario.target is not None:
        yield 'target', scenario.target.phiprime or scenario.target.generate_from


def _file_problems(scenario: Scenario, base_dir: str) -> List[str]:
    problems = []
    grids = scenario.grid.build() if scenario.grid is not None else None
    for where, spec in _signals(scenario):
        if spec.csv is None:
            continue
        path = os.path.join(base_dir, spec.csv)
        if not os.path.exists(path):
            problems.append(f"{where}: file {spec.csv} not found")
            continue
        rows = read_csv_column(path).size
        if grids is not None and rows != grids.time.size:
            problems.append(f"{where}: file {spec.csv} has {rows} rows, expected {grids.time.size}")
    for where, spec in (('u0', scenario.u0), ('source', scenario.source)):
        if spec is not None and spec.csv is not None:
            path = os.path.join(base_dir, spec.csv)
            if not os.path.exists(path):
                problems.append(f"{where}: file {spec.csv} not found")
            elif grids is not None:
                rows = read_csv_column(path).size
                expected = grids.space.size if where == 'u0' else grids.space.size * grids.time.size
                if rows != expected:
                    problems.append(f"{where}: file {spec.csv} has {rows} rows, expected {expected}")
    return problems


def parse_scenario(path: str, mode: Optional[str] = None) -> Scenario:
    """Load and validate a scenario; every problem found is reported in one ValidationError."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError([f"{path}: {e}"])
    if not isinstance(raw, dict):
        raise ValidationError([f"{path}: top level must be an object"])
    if mode is not None:
        raw['mode'] = mode
    try:
        scenario = Scenario.model_validate(raw)
    except PydanticValidationError as e:
        raise ValidationError(_format_pydantic(e))

    problems = _mode_problems(scenario) + _file_problems(scenario, os.path.dirname(os.path.abspath(path)))
    if problems:
        raise ValidationError(problems)
    Logger.debug(f"scenario {path} parsed, mode {scenario.mode}")
    return scenario


def write_scenario(scenario: Scenario, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(scenario.model_dump(mode='json'), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


# -- materialisation --------------------------------------------------------

@dataclass
class Inputs:
    grids: Grids
    u0: Optional[GridFunction]
    bset: Optional[BoundarySet]
    h: Optional[TimeSeries]
    f: Optional[SourceSplit]
    omega: Optional[TestFunction]
    target: Optional[TargetObservable]
    internal: Optional[InternalControlSpec]
    reference: Optional[TimeSeries]
    solver: SolverConfig
    picard: PicardConfig
    outer: Optional[PicardConfig]


def signal(spec: SignalSpec, timegrid: TimeGrid, base_dir: str = '.') -> TimeSeries:
    if spec.csv is not None:
        return TimeSeries(timegrid, read_csv_column(os.path.join(base_dir, spec.csv)))
    phase = 2.0 * np.pi * spec.frequency * timegrid.times / timegrid.T
    values = {
        'zero': np.zeros(timegrid.size),
        'sine': np.sin(phase),
        'cosine': np.cos(phase),
        'ramp': timegrid.times / timegrid.T,
    }[spec.preset]
    return TimeSeries(timegrid, spec.amplitude * values)


def profile(spec: FieldSpec, grid: Grid, omega: Optional[TestFunction] = None,
            base_dir: str = '.') -> np.ndarray:
    if spec.csv is not None:
        return read_csv_column(os.path.join(base_dir, spec.csv))
    if spec.preset == 'zero':
        return np.zeros(grid.size)
    if spec.preset == 'sine':
        return spec.amplitude * np.sin(spec.mode * np.pi * grid.nodes / grid.L)
    omega = omega or canonical_omega(grid.L, normalize=True)
    return spec.amplitude * omega(grid.nodes)


def space_time(spec: FieldSpec, grids: Grids, omega: Optional[TestFunction] = None,
               base_dir: str = '.') -> np.ndarray:
    grid, timegrid = grids
    if spec.csv is not None:
        return read_csv_column(os.path.join(base_dir, spec.csv)).reshape(timegrid.size, grid.size)
    if spec.preset == 'omega':
        return np.tile(profile(spec, grid, omega), (timegrid.size, 1))
    modulation = np.cos(2.0 * np.pi * timegrid.times / timegrid.T)
    return np.outer(modulation, profile(spec, grid, omega))


def build_omega(spec: OmegaSpec, L: float) -> TestFunction:
    if spec.kind == 'polynomial':
        return polynomial_omega(spec.coefficients, L)
    return canonical_omega(L, normalize=spec.normalize)


def _generated_target(scenario: Scenario, inputs: Inputs, reference: TimeSeries) -> TargetObservable:
    """φ' of the forward solve driven by the reference control."""
    grids, omega = inputs.grids, inputs.omega
    solve = solve_nonlinear if scenario.nonlinear else solve_linear
    if scenario.mode == 'control-internal':
        extra = inputs.internal.source(reference.values)
        f1 = extra if inputs.f is None else inputs.f.f1 + extra
        f = SourceSplit(grids.space, grids.time, f1)
        h = inputs.h
    else:
        f, h = inputs.f, reference
    traj = solve(inputs.u0, inputs.bset, h, f, inputs.solver, grids)
    phiprime = qprime_identity(traj, inputs.bset, h, f, omega, include_nonlinearity=scenario.nonlinear)
    phi0 = float(quad_values(traj.u[0] * omega(grids.space.nodes), grids.space.dx))
    return TargetObservable(phi0, phiprime)



def load_inputs(scenario: Scenario, base_dir: str = '.') -> Inputs:
    grids = scenario.grid.build()
    grid, timegrid = grids
    omega = build_omega(scenario.omega, grid.L) if scenario.omega is not None else None

    u0 = GridFunction(grid, profile(scenario.u0, grid, omega, base_dir)) if scenario.u0 is not None else None
    bset = None
    if scenario.boundary is not None:
        b = scenario.boundary
        bset = BoundarySet(*(signal(getattr(b, name), timegrid, base_dir) for name in ('h1', 'h2', 'h3', 'h4')))
    h = signal(scenario.control, timegrid, base_dir) if scenario.control is not None else None
    f = None
    if scenario.source is not None:
        f = SourceSplit(grid, timegrid, space_time(scenario.source, grids, omega, base_dir))

    internal = None
    if scenario.internal is not None and omega is not None:
        g = space_time(scenario.internal.g, grids, omega, base_dir)
        g0 = scenario.internal.g0
        if g0 is None:
            g0 = 0.5 * float(np.min(np.abs(quad_values(g * omega(grid.nodes), grid.dx))))
        internal = internal_spec(g, g0, omega, grids)

    inputs = Inputs(grids, u0, bset, h, f, omega, None, internal, None,
                    scenario.solver.build(), scenario.picard.build(),
                    scenario.outer.build() if scenario.outer is not None else None)
    if scenario.target is not None and omega is not None:
        if scenario.target.generate_from is not None:
            inputs.reference = signal(scenario.target.generate_from, timegrid, base_dir)
            inputs.target = _generated_target(scenario, inputs, inputs.reference)
        else:
            phi0 = scenario.target.phi0
            if phi0 is None:
                phi0 = 0.0 if u0 is None else float(quad_values(u0.values * omega(grid.nodes), grid.dx))
            inputs.target = TargetObservable(phi0, signal(scenario.target.phiprime, timegrid, base_dir))
    return inputs
