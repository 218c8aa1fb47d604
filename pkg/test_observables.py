import numpy as np
import pytest

from errors import PreconditionError, UndefinedRatioError
from mesh import Grid, GridFunction, Grids, TimeGrid, TimeSeries
from observables import (data_norm, decay_report, energy_check, gn_ratio, moment_q, moment_series,
                         qprime_bound_constant, qprime_identity, time_derivative)
from omega import canonical_omega, polynomial_omega
from solver import BoundarySet, SolverConfig, SourceSplit, Trajectory, solve_linear
from verify import manufactured_case, random_field, random_signal


def test_moment_of_initial_state(small_grids, omega1):
    grid, _ = small_grids
    u0 = GridFunction(grid, np.ones(grid.size))
    traj = solve_linear(u0, BoundarySet.zeros(small_grids.time), None, None, SolverConfig(), small_grids)
    assert moment_q(traj, omega1).values[0] == pytest.approx(1.0 / 60.0, rel=1e-5)


def test_time_derivative_is_exact_for_quadratics():
    timegrid = TimeGrid(1.0, 10)
    series = TimeSeries(timegrid, timegrid.times ** 2)
    assert np.allclose(time_derivative(series).values, 2.0 * timegrid.times)


def test_identity_tracks_the_moment_derivative():
    case = manufactured_case('poly-decay')
    omega = canonical_omega(case.L)
    grids = case.grids(63)
    u0, bset, h, f, _ = case.materialize(grids)
    traj = solve_linear(u0, bset, h, f, SolverConfig(), grids)
    series = moment_series(traj, bset, h, f, omega)
    scale = np.max(np.abs(series.qprime_fd.values))
    assert series.identity_error() / scale < 0.05


def test_printed_form_differs_by_curvature_times_h2(small_grids, omega1):
    _, timegrid = small_grids
    zero = TimeSeries.zeros(timegrid)
    h2 = TimeSeries(timegrid, np.sin(np.pi * timegrid.times))
    bset = BoundarySet(zero, h2, zero, zero)
    traj = solve_linear(None, bset, None, None, SolverConfig(), small_grids)
    corrected = qprime_identity(traj, bset, None, None, omega1)
    printed = qprime_identity(traj, bset, None, None, omega1, printed=True)
    assert np.allclose(corrected.values - printed.values, -omega1(1.0, 2) * h2.values, atol=1e-12)


def test_non_member_omega_is_refused(small_grids):
    traj = solve_linear(None, None, None, None, SolverConfig(), small_grids)
    with pytest.raises(PreconditionError):
        moment_q(traj, polynomial_omega([0.0, 0.0, 1.0, -2.0, 1.0], 1.0))


def test_energy_inequality_holds_for_small_data(rng):
    grids = Grids(Grid(1.0, 31), TimeGrid(0.5, 16))
    h = random_signal(rng, grids.time, amplitude=0.01)
    f1 = random_field(rng, grids.space, grids.time, amplitude=0.01)
    traj = solve_linear(None, None, h, SourceSplit(grids.space, grids.time, f1), SolverConfig(theta=1.0), grids)
    report = energy_check(traj, h, f1, tol=1e-5)
    assert report.passed
    assert set(report.to_dict()) == {'min_margin', 'argmin_t', 'tol', 'pass'}


def test_energy_check_preconditions(small_grids, omega1):
    grid, timegrid = small_grids
    u0 = GridFunction(grid, omega1(grid.nodes))
    traj = solve_linear(u0, None, None, None, SolverConfig(), small_grids)
    with pytest.raises(PreconditionError):
        energy_check(traj, TimeSeries.zeros(timegrid), None)

    ramp = TimeSeries(timegrid, timegrid.times)
    zero = TimeSeries.zeros(timegrid)
    bset = BoundarySet(ramp, zero, zero, zero)
    traj = solve_linear(None, bset, None, None, SolverConfig(), small_grids)
    with pytest.raises(PreconditionError):
        energy_check(traj, zero, None)


def test_homogeneous_decay():
    grids = Grids(Grid(1.0, 31), TimeGrid(1.0, 32))
    u0 = GridFunction(grids.space, canonical_omega(1.0, normalize=True)(grids.space.nodes))
    traj = solve_linear(u0, None, None, None, SolverConfig(theta=1.0), grids)
    assert decay_report(traj).passed


def test_gn_ratio_is_scale_invariant(small_grids, rng):
    grid, timegrid = small_grids
    field = random_field(rng, grid, timegrid)
    ratio = gn_ratio(Trajectory.from_field(grid, timegrid, field))
    assert ratio > 0.0
    assert gn_ratio(Trajectory.from_field(grid, timegrid, 3.0 * field)) == pytest.approx(ratio, rel=1e-10)


def test_gn_ratio_of_zero_field_is_undefined(small_grids):
    grid, timegrid = small_grids
    zero = Trajectory.from_field(grid, timegrid, np.zeros((timegrid.size, grid.size)))
    with pytest.raises(UndefinedRatioError):
        gn_ratio(zero)


def test_bound_constant_and_data_norm(small_grids, omega1):
    grid, timegrid = small_grids
    h = TimeSeries(timegrid, np.sin(2.0 * np.pi * timegrid.times / timegrid.T))
    traj = solve_linear(None, None, h, None, SolverConfig(), small_grids)
    size = data_norm(None, None, h, None, timegrid.dt)
    assert size == pytest.approx(np.sqrt(timegrid.T / 2.0), rel=1e-3)
    assert qprime_bound_constant(traj, None, h, None, omega1) > 0.0
    with pytest.raises(UndefinedRatioError):
        qprime_bound_constant(solve_linear(None, None, None, None, SolverConfig(), small_grids),
                              None, None, None, omega1)


def test_moment_is_linear_in_the_field(small_grids, omega1, rng):
    grid, timegrid = small_grids
    a = random_field(rng, grid, timegrid)
    b = random_field(rng, grid, timegrid)

    def q(u):
        return moment_q(Trajectory.from_field(grid, timegrid, u), omega1).values

    assert np.allclose(q(a + 2.0 * b), q(a) + 2.0 * q(b), atol=1e-14)


def test_moment_of_omega_against_itself(omega1):
    # ∫ x⁶(x - 1)⁴ dx = 6! 4! / 11! = 1/2310
    grids = Grids(Grid(1.0, 63), TimeGrid(0.5, 32))
    grid, timegrid = grids
    field = np.tile(omega1(grid.nodes), (timegrid.size, 1))
    q = moment_q(Trajectory.from_field(grid, timegrid, field), omega1)
    assert q.values[0] == pytest.approx(1.0 / 2310.0, rel=1e-6)


def test_bound_constant_grows_with_the_horizon(omega1):
    grid = Grid(1.0, 31)
    u0 = GridFunction(grid, np.sin(np.pi * grid.nodes))
    constants = []
    for T in (0.25, 0.5, 1.0):
        grids = Grids(grid, TimeGrid(T, int(round(32 * T))))
        traj = solve_linear(u0, None, None, None, SolverConfig(), grids)
        constants.append(qprime_bound_constant(traj, None, None, None, omega1))
    assert constants[0] <= constants[1] <= constants[2]


def test_gn_ratio_of_a_static_sine():
    L, T = 1.0, 1.0
    grids = Grids(Grid(L, 63), TimeGrid(T, 64))
    grid, timegrid = grids
    field = np.tile(np.sin(np.pi * grid.nodes / L), (timegrid.size, 1))
    ratio = gn_ratio(Trajectory.from_field(grid, timegrid, field))
    # ||u²|| = (3TL/8)^1/2, ||u||_X = (L/2)^1/2 + (π/L)² (TL/2)^1/2
    x_norm = np.sqrt(L / 2.0) + (np.pi / L) ** 2 * np.sqrt(T * L / 2.0)
    expected = np.sqrt(3.0 * T * L / 8.0) / ((np.sqrt(T) + T ** 0.25) * x_norm ** 2)
    assert ratio == pytest.approx(expected, rel=1e-3)
