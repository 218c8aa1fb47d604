import json
import os

import pytest

from database import DatabaseManager
from main import build_parser, main, run
from scenario import parse_scenario


def _scenario(tmp_path, payload, name='scenario.json'):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


BOUNDARY = {
    'mode': 'control-boundary',
    'grid': {'L': 3.0, 'N': 31, 'T': 0.25, 'M': 16},
    'omega': {'kind': 'canonical'},
    'target': {'generate_from': {'preset': 'sine', 'amplitude': 0.01}},
}


def test_boundary_recovery_run(tmp_path):
    path = _scenario(tmp_path, BOUNDARY)
    out = str(tmp_path / 'out')
    assert main(['control-boundary', '--scenario', path, '--out', out]) == 0

    report = json.load(open(os.path.join(out, 'report.json')))
    assert report['recovery_error'] <= 1e-4
    assert report['residual_history'][-1] < 1e-10
    control = open(os.path.join(out, 'control.csv')).read().splitlines()
    assert control[0] == 't,value'
    assert len(control) == 18

    record = json.load(open(os.path.join(out, 'run.json')))
    assert record['exit_code'] == 0
    assert set(record['digests']) == set(record['artifacts'])
    assert parse_scenario(os.path.join(out, 'scenario.json')) == parse_scenario(path)


def test_run_is_registered(tmp_path):
    registry = DatabaseManager(str(tmp_path / 'registry.db'))
    scenario = parse_scenario(_scenario(tmp_path, {'mode': 'solve', 'grid': {'L': 1.0, 'N': 31, 'T': 0.5},
                                                   'omega': {'kind': 'canonical'}}))
    record = run(scenario, out_dir=str(tmp_path / 'out'), registry=registry)
    stored = registry.get_run(record.run_id)
    assert stored['status'] == 'success'
    assert stored['exit_code'] == 0
    assert 'wall_seconds' in stored['metrics']
    assert os.path.exists(record.artifacts['moments'])


def test_out_of_regime_run_exits_with_divergence(tmp_path):
    path = _scenario(tmp_path, {
        'mode': 'control-boundary',
        'grid': {'L': 3.0, 'N': 31, 'T': 0.5, 'M': 16},
        'omega': {'kind': 'canonical'},
        'nonlinear': True,
        'constant': 1.0,
        'u0': {'preset': 'sine', 'amplitude': 20.0},
        'target': {'phiprime': {'preset': 'sine', 'amplitude': 10.0}},
    })
    out = str(tmp_path / 'out')
    assert main(['control-boundary', '--scenario', path, '--out', out]) == 4
    report = json.load(open(os.path.join(out, 'report.json')))
    assert report['status'] == 'failed'
    assert 'nonlinear outer iteration' in report['error']
    assert report['residual_history'][0] >= 24.0
    assert len(report['residual_history']) >= 2


def test_verify_run_is_byte_identical(tmp_path):
    path = _scenario(tmp_path, {'mode': 'verify'})
    outputs = []
    for name in ('a', 'b'):
        out = str(tmp_path / name)
        assert main(['verify', '--scenario', path, '--out', out, '--seed', '0']) == 0
        outputs.append(open(os.path.join(out, 'report.json'), 'rb').read())
    assert outputs[0] == outputs[1]


def test_validation_failure_exits_with_two(tmp_path):
    path = _scenario(tmp_path, {'mode': 'control-boundary', 'grid': {'L': 3.0, 'N': 31, 'T': 0.25}})
    assert main(['control-boundary', '--scenario', path, '--out', str(tmp_path / 'out')]) == 2
    assert main(['solve', '--scenario', str(tmp_path / 'missing.json')]) == 2


def test_unknown_mode_is_an_argument_error():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(['optimise', '--scenario', 'x.json'])
    assert info.value.code == 2


def test_full_flag_selects_the_long_property_variants(tmp_path):
    args = build_parser().parse_args(['verify', '--scenario', 'x.json', '--full'])
    assert args.full
    assert not build_parser().parse_args(['verify', '--scenario', 'x.json']).full
    scenario = parse_scenario(_scenario(tmp_path, {'mode': 'verify',
                                                   'verify': {'seed': 2, 'full': True}}))
    assert scenario.verify.full and scenario.verify.seed == 2
