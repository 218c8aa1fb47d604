import argparse
import os
import sys
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Callable, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from database import DatabaseManager
from errors import FixedPointDivergenceError, KawaharaError
from monitoring import RunMonitor
from observables import moment_series
from scenario import MODES, Inputs, Scenario, load_inputs, parse_scenario, write_scenario
from solver import l2_norms, norm_X, solve_linear, solve_nonlinear, write_traces_csv, write_trajectory_csv
from synthesis import (SynthesisReport, calibrate_constant, controllable_boundary_linear,
                       controllable_internal_linear, relative_l2_error, theta_boundary_nonlinear,
                       theta_internal_nonlinear)
from utils import Logger, calculate_file_hash, write_csv, write_json
from verify import convergence_study, manufactured_case, run_property_suite

RECOVERY_TOLERANCE = 1e-4
EXIT_SUCCESS = 0
EXIT_CHECK_FAILED = 1


@dataclass
class RunRecord:
    run_id: str
    mode: str
    out_dir: str
    started: str
    finished: Optional[str] = None
    exit_code: int = EXIT_SUCCESS
    error: Optional[str] = None
    artifacts: Dict[str, str] = field(default_factory=dict)
    digests: Dict[str, str] = field(default_factory=dict)
    metrics: Dict[str, float] = field(default_factory=dict)
    summary: Dict = field(default_factory=dict)

    def add(self, name: str, path: str):
        self.artifacts[name] = path


# -- mode handlers ----------------------------------------------------------
# Each handler writes its artifacts into the record and returns the exit code
# of the mode's acceptance check.

def _run_solve(scenario: Scenario, inputs: Inputs, record: RunRecord) -> int:
    solve = solve_nonlinear if scenario.nonlinear else solve_linear
    traj = solve(inputs.u0, inputs.bset, inputs.h, inputs.f, inputs.solver, inputs.grids)
    out = record.out_dir
    record.add('trajectory', write_trajectory_csv(traj, os.path.join(out, 'trajectory.csv')))
    record.add('traces', write_traces_csv(traj, os.path.join(out, 'traces.csv')))
    report = {
        'mode': 'solve',
        'nonlinear': scenario.nonlinear,
        'N': inputs.grids.space.N,
        'M': inputs.grids.time.M,
        'norm_X': norm_X(traj),
        'final_l2': float(l2_norms(traj)[-1]),
    }
    if inputs.omega is not None:
        series = moment_series(traj, inputs.bset, inputs.h, inputs.f, inputs.omega,
                               include_nonlinearity=scenario.nonlinear)
        rows = zip(traj.timegrid.times, series.q.values, series.qprime_fd.values,
                   series.qprime_identity.values)
        record.add('moments', write_csv(os.path.join(out, 'moments.csv'),
                                        ['t', 'q', 'qprime_fd', 'qprime_identity'], rows))
        report['identity_error'] = series.identity_error()
    record.add('report', write_json(os.path.join(out, 'report.json'), report))
    record.summary = report
    return EXIT_SUCCESS


def _constant(scenario: Scenario, inputs: Inputs) -> float:
    if scenario.constant is not None:
        return scenario.constant
    return calibrate_constant(inputs.grids, inputs.solver, store=DatabaseManager.from_env(), progress=True)


def _synthesize(scenario: Scenario, inputs: Inputs) -> SynthesisReport:
    args = (inputs.target, inputs.omega, inputs.grids, inputs.picard, inputs.solver)
    if scenario.mode == 'control-boundary':
        if scenario.nonlinear:
            return theta_boundary_nonlinear(inputs.u0, inputs.bset, inputs.f, *args,
                                            outer=inputs.outer, constant=_constant(scenario, inputs))
        return controllable_boundary_linear(inputs.u0, inputs.bset, inputs.f, *args)
    if scenario.nonlinear:
        return theta_internal_nonlinear(inputs.u0, inputs.bset, inputs.h, inputs.internal, *args,
                                        outer=inputs.outer, constant=_constant(scenario, inputs),
                                        extra=inputs.f)
    return controllable_internal_linear(inputs.u0, inputs.bset, inputs.h, inputs.internal, *args,
                                        extra=inputs.f)


def _run_control(scenario: Scenario, inputs: Inputs, record: RunRecord) -> int:
    report = _synthesize(scenario, inputs)
    out = record.out_dir
    times = inputs.grids.time.times
    record.add('control', write_csv(os.path.join(out, 'control.csv'), ['t', 'value'],
                                    zip(times, report.control.values)))
    record.add('residuals', write_csv(os.path.join(out, 'residuals.csv'), ['iteration', 'residual'],
                                      enumerate(report.residual_history, start=1)))
    if report.outer_history:
        record.add('outer_residuals', write_csv(os.path.join(out, 'outer_residuals.csv'),
                                                ['iteration', 'residual'],
                                                enumerate(report.outer_history, start=1)))
    record.add('trajectory', write_trajectory_csv(report.trajectory, os.path.join(out, 'trajectory.csv')))
    record.add('traces', write_traces_csv(report.trajectory, os.path.join(out, 'traces.csv')))

    payload = report.to_dict()
    code = EXIT_SUCCESS
    if inputs.reference is not None:
        error = relative_l2_error(report.control, inputs.reference)
        payload['recovery_error'] = error
        payload['recovery_pass'] = error <= RECOVERY_TOLERANCE
        if error > RECOVERY_TOLERANCE:
            Logger.warning(f"recovered control differs from the reference by {error:.3e}")
            code = EXIT_CHECK_FAILED
    record.add('report', write_json(os.path.join(out, 'report.json'), payload))
    record.summary = payload
    return code


def _run_verify(scenario: Scenario, inputs: Optional[Inputs], record: RunRecord) -> int:
    settings = scenario.verify
    suite = run_property_suite(settings.seed, settings.corrupt_qprime_sign, progress=True, full=settings.full)
    record.add('report', write_json(os.path.join(record.out_dir, 'report.json'), suite.to_dict()))
    record.summary = {'all_pass': suite.all_passed, 'properties': suite.names()}
    return EXIT_SUCCESS if suite.all_passed else EXIT_CHECK_FAILED


def _run_convergence(scenario: Scenario, inputs: Optional[Inputs], record: RunRecord) -> int:
    spec = scenario.convergence
    tables = {}
    for name in spec.cases:
        table = convergence_study(manufactured_case(name), spec.levels, scenario.solver.build(),
                                  N0=spec.N0, progress=True)
        record.add(f'convergence_{name}', table.to_csv(os.path.join(record.out_dir, f'convergence_{name}.csv')))
        tables[name] = table.to_dict()
    record.add('report', write_json(os.path.join(record.out_dir, 'report.json'), {'cases': tables}))
    record.summary = {name: t['fitted_order'] for name, t in tables.items()}
    return EXIT_SUCCESS if all(t['pass'] for t in tables.values()) else EXIT_CHECK_FAILED


HANDLERS: Dict[str, Callable[[Scenario, Optional[Inputs], RunRecord], int]] = {
    'solve': _run_solve,
    'control-boundary': _run_control,
    'control-internal': _run_control,
    'verify': _run_verify,
    'convergence': _run_convergence,
}


# -- run --------------------------------------------------------------------

def _failure_report(error: KawaharaError) -> Dict:
    payload = {'status': 'failed', 'exit_code': error.exit_code, 'module': error.module,
               'error': error.message}
    if isinstance(error, FixedPointDivergenceError):
        payload['residual_history'] = error.history
        payload['measured_rate'] = error.rate
    return payload


def run(scenario: Scenario, base_dir: str = '.', out_dir: Optional[str] = None,
        registry: Optional[DatabaseManager] = None) -> RunRecord:
    """Execute one scenario; solver failures end up in the record, not as exceptions."""
    out_dir = out_dir or scenario.out
    os.makedirs(out_dir, exist_ok=True)
    run_id = f"RUN-{datetime.now().year}-{str(uuid.uuid4())[:8]}"
    record = RunRecord(run_id, scenario.mode, out_dir, datetime.now().isoformat())
    registry = registry or DatabaseManager(os.environ.get('KAWACTL_RUNS', os.path.join(out_dir, 'runs.db')))
    registry.create_run(run_id, scenario.mode, scenario.model_dump(mode='json'), out_dir)
    record.add('scenario', write_scenario(scenario, os.path.join(out_dir, 'scenario.json')))

    Logger.info(f"{run_id}: mode {scenario.mode}, output in {out_dir}")
    with RunMonitor(run_id) as monitor:
        try:
            inputs = load_inputs(scenario, base_dir) if scenario.grid is not None else None
            record.exit_code = HANDLERS[scenario.mode](scenario, inputs, record)
        except KawaharaError as e:
            Logger.error(str(e))
            record.exit_code = e.exit_code
            record.error = str(e)
            record.summary = _failure_report(e)
            record.add('report', write_json(os.path.join(out_dir, 'report.json'), record.summary))
    record.metrics = monitor.metrics

    record.finished = datetime.now().isoformat()
    record.digests = {name: calculate_file_hash(path) for name, path in record.artifacts.items()}
    write_json(os.path.join(out_dir, 'run.json'), asdict(record))

    status = 'success' if record.exit_code == EXIT_SUCCESS else 'failed'
    registry.update_status(run_id, status, record.exit_code, record.error)
    for name, value in record.metrics.items():
        registry.log_metric(name, value, run_id)
    Logger.info(f"{run_id}: {status} (exit {record.exit_code})")
    return record


# -- command line -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='kawactl',
                                     description="Kawahara boundary-value solver and moment control synthesis.")
    parser.add_argument('mode', choices=MODES)
    parser.add_argument('--scenario', required=True, help="scenario JSON file")
    parser.add_argument('--out', default=None, help="output directory (overrides the scenario)")
    parser.add_argument('--seed', type=int, default=None, help="seed of the property suite")
    parser.add_argument('--full', action='store_true', help="run the long property variants")
    parser.add_argument('--verbose', action='store_true')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    load_dotenv()
    if args.verbose:
        Logger.set_level('DEBUG')
    np.seterr(over='ignore', invalid='ignore')

    try:
        scenario = parse_scenario(args.scenario, mode=args.mode)
        if args.seed is not None:
            scenario = scenario.model_copy(update={'verify': scenario.verify.model_copy(update={'seed': args.seed})})
        if args.full:
            scenario = scenario.model_copy(update={'verify': scenario.verify.model_copy(update={'full': True})})
        record = run(scenario, base_dir=os.path.dirname(os.path.abspath(args.scenario)), out_dir=args.out)
        return record.exit_code
    except KawaharaError as e:
        Logger.error(str(e))
        return e.exit_code
    except Exception as e:
        Logger.error(f"unexpected failure: {e}")
        return 1


def cli():
    sys.exit(main())


if __name__ == "__main__":
    cli()
