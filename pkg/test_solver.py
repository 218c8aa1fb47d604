import numpy as np
import pytest

from errors import ArgumentError, NonConvergenceError
from mesh import Grid, GridFunction, Grids, TimeGrid, TimeSeries, quad_values
from omega import canonical_omega
from solver import (BoundarySet, SolverConfig, SourceSplit, Trajectory, assemble, boundary_traces,
                    l2_norms, norm_X, solve_linear, solve_nonlinear, write_traces_csv,
                    write_trajectory_csv)
from observables import time_derivative
from verify import ORDER_WINDOW, convergence_study, manufactured_case


def _signal(timegrid, scale, freq):
    return TimeSeries(timegrid, scale * np.sin(freq * np.pi * timegrid.times))


def test_zero_data_gives_zero_trajectory(small_grids):
    traj = solve_linear(None, None, None, None, SolverConfig(), small_grids)
    assert not np.any(traj.u)
    assert not np.any(traj.uxxL.values)
    assert norm_X(traj) == 0.0


def test_step_matches_dense_solve(small_grids):
    grid, timegrid = small_grids
    u0 = GridFunction(grid, canonical_omega(1.0, normalize=True)(grid.nodes))
    cfg = SolverConfig(theta=0.5)
    traj = solve_linear(u0, None, None, None, cfg, small_grids)
    op = assemble(grid, timegrid.dt, cfg.theta)
    N, dt = grid.N, timegrid.dt
    lhs = np.eye(N) - 0.5 * dt * op.K
    rhs = u0.values[1:-1] + 0.5 * dt * op.K @ u0.values[1:-1]
    assert np.allclose(traj.u[1, 1:-1], np.linalg.solve(lhs, rhs), atol=1e-12)


def test_imposed_traces_are_reproduced(small_grids):
    grid, timegrid = small_grids
    bset = BoundarySet(_signal(timegrid, 0.1, 1), _signal(timegrid, -0.2, 2),
                       _signal(timegrid, 0.3, 1), _signal(timegrid, 0.05, 3))
    h = _signal(timegrid, 0.4, 2)
    traj = solve_linear(None, bset, h, None, SolverConfig(), small_grids)
    traces = boundary_traces(traj)
    expected = np.column_stack([bset.as_array(), h.values])
    assert np.allclose(traces, expected, atol=1e-9)
    assert np.allclose(traj.uxxL.values, h.values, atol=1e-9)
    assert np.array_equal(traj.u[:, 0], bset.h1.values)


def test_manufactured_solution_converges_at_second_order():
    case = manufactured_case('poly-decay')
    errors = []
    for N in (31, 63):
        grids = case.grids(N)
        u0, bset, h, f, exact = case.materialize(grids)
        traj = solve_linear(u0, bset, h, f, SolverConfig(), grids)
        errors.append(np.max(np.abs(traj.u - exact)))
    assert errors[1] < 5e-3
    assert 1.5 <= np.log2(errors[0] / errors[1]) <= 2.6


def test_nonlinear_manufactured_solution():
    case = manufactured_case('nonlinear-poly')
    errors = []
    for N in (31, 63):
        grids = case.grids(N)
        u0, bset, h, f, exact = case.materialize(grids)
        traj = solve_nonlinear(u0, bset, h, f, SolverConfig(), grids)
        errors.append(np.max(np.abs(traj.u - exact)))
    assert errors[1] < errors[0]
    assert np.log2(errors[0] / errors[1]) >= 1.5


def test_implicit_euler_contracts_homogeneous_runs():
    grids = Grids(Grid(1.0, 31), TimeGrid(1.0, 32))
    u0 = GridFunction(grids.space, canonical_omega(1.0, normalize=True)(grids.space.nodes))
    traj = solve_linear(u0, None, None, None, SolverConfig(theta=1.0), grids)
    norms = l2_norms(traj)
    assert np.all(np.diff(norms) <= 1e-8)


def test_nonlinear_inner_loop_reports_nonconvergence(small_grids):
    grid, _ = small_grids
    u0 = GridFunction(grid, canonical_omega(1.0, normalize=True)(grid.nodes))
    cfg = SolverConfig(picard_tol=1e-15, picard_max=1)
    with pytest.raises(NonConvergenceError) as info:
        solve_nonlinear(u0, None, None, None, cfg, small_grids)
    assert info.value.step == 1
    assert info.value.exit_code == 3


def test_config_is_validated():
    with pytest.raises(ArgumentError):
        SolverConfig(theta=0.3)
    with pytest.raises(ArgumentError):
        SolverConfig(picard_max=0)


def test_mismatched_grids_are_rejected(small_grids):
    other = TimeGrid(1.0, 10)
    with pytest.raises(ArgumentError):
        solve_linear(None, None, TimeSeries.zeros(other), None, SolverConfig(), small_grids)
    with pytest.raises(ArgumentError):
        SolverConfig(dt=-1.0)
    with pytest.raises(ArgumentError):
        solve_linear(None, None, None, None, SolverConfig(dt=0.1), small_grids)


def test_source_split_shapes(small_grids):
    grid, timegrid = small_grids
    with pytest.raises(ArgumentError):
        SourceSplit(grid, timegrid, np.zeros((3, 3)))
    f = SourceSplit.zeros(grid, timegrid).with_flux(np.ones((timegrid.size, grid.size)))
    assert f.has_f2


def test_trajectory_from_field_and_difference(small_grids):
    grid, timegrid = small_grids
    field = np.outer(np.ones(timegrid.size), grid.nodes ** 2)
    traj = Trajectory.from_field(grid, timegrid, field)
    assert np.allclose(traj.uxx0.values, 2.0)
    assert np.allclose(traj.uxxL.values, 2.0)
    assert not np.any((traj - traj).u)


def test_csv_exports(tmp_path, small_grids):
    grid, timegrid = small_grids
    traj = solve_linear(None, None, _signal(timegrid, 0.1, 1), None, SolverConfig(), small_grids)
    path = write_trajectory_csv(traj, str(tmp_path / 'trajectory.csv'))
    lines = open(path).read().splitlines()
    assert lines[0] == 't,x,u'
    assert len(lines) == 1 + timegrid.size * grid.size
    traces = open(write_traces_csv(traj, str(tmp_path / 'traces.csv'))).read().splitlines()
    assert traces[0] == 't,uxx0,uxxL'


def test_linear_solves_superpose(small_grids):
    grid, timegrid = small_grids
    bump = np.sin(np.pi * grid.nodes)
    first = (GridFunction(grid, 0.1 * bump),
             BoundarySet(_signal(timegrid, 0.1, 1), _signal(timegrid, -0.2, 2),
                         _signal(timegrid, 0.3, 1), _signal(timegrid, 0.05, 3)),
             _signal(timegrid, 0.4, 2),
             SourceSplit(grid, timegrid, np.outer(np.cos(np.pi * timegrid.times), bump)))
    second = (GridFunction(grid, -0.3 * bump ** 2),
              BoundarySet(_signal(timegrid, 0.2, 3), _signal(timegrid, 0.1, 1),
                          _signal(timegrid, -0.1, 2), _signal(timegrid, 0.2, 1)),
              _signal(timegrid, -0.1, 1),
              SourceSplit(grid, timegrid, np.outer(timegrid.times, bump ** 3)))
    combined = (GridFunction(grid, first[0].values + second[0].values),
                BoundarySet(*(TimeSeries(timegrid, col) for col in (first[1].as_array() + second[1].as_array()).T)),
                first[2] + second[2],
                SourceSplit(grid, timegrid, first[3].f1 + second[3].f1))
    cfg = SolverConfig()
    total = solve_linear(*combined, cfg, small_grids)
    parts = solve_linear(*first, cfg, small_grids).u + solve_linear(*second, cfg, small_grids).u
    assert np.allclose(total.u, parts, atol=1e-12)


def test_energy_law_residual_shrinks_under_refinement():
    # d/dt ||u||² = 2∫f1 u + u_xx(L)² - u_xx(0)² when u and u_x vanish at both ends
    case = manufactured_case('poly-decay')
    errors = []
    for N in (31, 63, 127):
        grids = case.grids(N)
        grid, timegrid = grids
        u0, bset, h, f, _ = case.materialize(grids)
        traj = solve_linear(u0, bset, h, f, SolverConfig(), grids)
        energy = TimeSeries(timegrid, quad_values(traj.u ** 2, grid.dx))
        rate = time_derivative(energy).values
        law = 2.0 * quad_values(f.f1 * traj.u, grid.dx) + traj.uxxL.values ** 2 - traj.uxx0.values ** 2
        errors.append(float(np.max(np.abs(rate - law)) / np.max(np.abs(law))))
    assert errors[0] / errors[1] >= 2.0
    assert errors[1] / errors[2] >= 2.0


def test_traveling_bump_converges_at_second_order():
    # the only case with u_xx(0) != 0, so it exercises the left closure
    table = convergence_study(manufactured_case('traveling-bump'), 3, SolverConfig(), N0=31)
    assert ORDER_WINDOW[0] <= table.fitted_order <= ORDER_WINDOW[1]


def test_norm_X_of_a_static_ramp():
    grids = Grids(Grid(1.0, 31), TimeGrid(1.0, 32))
    grid, timegrid = grids
    ramp = np.tile(grid.nodes, (timegrid.size, 1))
    traj = Trajectory.from_field(grid, timegrid, ramp)
    # ||x||_{L2(0,1)} = 1/√3 and u_xx vanishes
    assert norm_X(traj) == pytest.approx(np.sqrt(1.0 / 3.0), abs=1e-10)
