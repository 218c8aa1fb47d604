import pytest

from database import DatabaseManager
from monitoring import RunMonitor


@pytest.fixture
def db(tmp_path):
    return DatabaseManager(str(tmp_path / 'store' / 'kawactl.db'))


def test_run_lifecycle(db):
    db.create_run('RUN-1', 'solve', {'mode': 'solve'}, '/tmp/out')
    assert db.get_run('RUN-1')['status'] == 'running'
    db.update_status('RUN-1', 'failed', 4, 'diverged')
    run = db.get_run('RUN-1')
    assert run['status'] == 'failed' and run['exit_code'] == 4
    assert run['scenario'] == {'mode': 'solve'}
    assert db.get_run('RUN-2') is None


def test_calibration_store(db):
    assert db.get_calibration(1.0, 31, 32, 0.5) is None
    db.save_calibration(1.0, 31, 32, 0.5, 2.5, {'control': 2.5})
    assert db.get_calibration(1.0, 31, 32, 0.5) == 2.5
    db.save_calibration(1.0, 31, 32, 0.5, 3.0)
    assert db.get_calibration(1.0, 31, 32, 0.5) == 3.0
    assert db.get_calibration(1.0, 31, 32, 1.0) is None


def test_metrics_are_attached_to_their_run(db):
    db.create_run('RUN-1', 'verify', {}, 'out')
    db.update_status('RUN-1', 'success', 0)
    db.log_metric('wall_seconds', 2.0, 'RUN-1')
    db.log_metric('wall_seconds', 4.0)
    assert db.get_run('RUN-1')['metrics'] == {'wall_seconds': 2.0}
    assert db.get_run_metrics('RUN-1') == [{'metric_name': 'wall_seconds', 'metric_value': 2.0}]


def test_env_override(tmp_path, monkeypatch):
    target = tmp_path / 'elsewhere.db'
    monkeypatch.setenv('KAWACTL_CALIBRATION', str(target))
    assert DatabaseManager.from_env().db_path == str(target)
    assert target.exists()


def test_run_monitor_records_resources():
    with RunMonitor('busy loop') as monitor:
        sum(range(1000))
    assert set(monitor.metrics) == {'wall_seconds', 'cpu_seconds', 'rss_bytes', 'system_memory_percent'}
    assert monitor.metrics['wall_seconds'] >= 0.0
    assert monitor.metrics['rss_bytes'] > 0
