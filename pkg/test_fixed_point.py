import numpy as np
import pytest

from errors import ArgumentError, FixedPointDivergenceError
from fixed_point import DivergenceMonitor, PicardConfig, iterate, measure_rate, weighted_norms

TIMES = np.linspace(0.0, 1.0, 11)


def test_contraction_converges_to_fixed_point():
    result = iterate(lambda x: 0.5 * x + 1.0, np.zeros(TIMES.size), TIMES, PicardConfig(tol=1e-12))
    assert np.allclose(result.solution, 2.0, atol=1e-11)
    assert result.rate == pytest.approx(0.5, rel=1e-6)
    assert result.rate_r2 > 0.99
    assert result.residuals[-1] < 2e-12


def test_expanding_map_raises_divergence():
    with pytest.raises(FixedPointDivergenceError) as info:
        iterate(lambda x: 2.0 * x + 1.0, np.zeros(TIMES.size), TIMES, PicardConfig())
    error = info.value
    assert error.exit_code == 4
    assert error.rate > 1.0
    assert error.history[-1] > error.history[0]


def test_non_finite_iterate_is_divergence():
    with pytest.raises(FixedPointDivergenceError):
        iterate(lambda x: x + np.inf, np.zeros(TIMES.size), TIMES, PicardConfig())


def test_budget_exhaustion_with_slow_contraction():
    cfg = PicardConfig(tol=1e-12, max_iter=5)
    with pytest.raises(FixedPointDivergenceError) as info:
        iterate(lambda x: 0.9 * x + 1.0, np.zeros(TIMES.size), TIMES, cfg)
    assert "raise max_iter" in str(info.value)
    assert info.value.rate < 1.0


def test_tolerance_scales_with_large_iterates():
    # fixed point 1e8: an absolute 1e-10 sits below the roundoff floor
    result = iterate(lambda x: 0.5 * x + 5e7, np.zeros(TIMES.size), TIMES, PicardConfig(tol=1e-10))
    assert np.allclose(result.solution, 1e8, rtol=1e-9)
    assert result.residuals[-1] < 1e-10 * 1e8


def test_damping_keeps_the_fixed_point():
    cfg = PicardConfig(tol=1e-12, damping=0.5)
    result = iterate(lambda x: 0.5 * x + 1.0, np.zeros(TIMES.size), TIMES, cfg)
    assert np.allclose(result.solution, 2.0, atol=1e-10)


def test_anderson_mixing_accelerates_slow_linear_maps():
    target = np.linspace(1.0, 2.0, TIMES.size)

    def slow(x):
        return 0.97 * x + 0.03 * target

    plain = PicardConfig(tol=1e-10, max_iter=2000)
    mixed = PicardConfig(tol=1e-10, max_iter=2000, anderson_depth=2)
    baseline = iterate(slow, np.zeros(TIMES.size), TIMES, plain)
    fast = iterate(slow, np.zeros(TIMES.size), TIMES, mixed)
    assert np.allclose(fast.solution, target, atol=1e-8)
    assert fast.iterations < baseline.iterations // 10


def test_measure_rate_of_geometric_sequence():
    rho, r2 = measure_rate([3.0 * 0.25 ** k for k in range(8)])
    assert rho == pytest.approx(0.25)
    assert r2 == pytest.approx(1.0)
    assert measure_rate([1.0]) == (0.0, 1.0)


def test_weighted_norms_discount_late_times():
    residual = np.ones(TIMES.size)
    sup0, l20 = weighted_norms(residual, TIMES, 0.0)
    sup5, l25 = weighted_norms(residual, TIMES, 5.0)
    assert sup0 == pytest.approx(1.0) and l20 == pytest.approx(1.0)
    assert sup5 == pytest.approx(1.0)
    assert l25 < l20


def test_monitor_growth_streak():
    monitor = DivergenceMonitor("streak")
    monitor.record(1.0)
    with pytest.raises(FixedPointDivergenceError):
        for r in (1.1, 1.2, 1.3, 1.4, 1.5):
            monitor.record(r)


@pytest.mark.parametrize("kwargs", [
    {'tol': 0.0}, {'max_iter': 0}, {'damping': 0.0}, {'damping': 1.5},
    {'gamma': -1.0}, {'anderson_depth': -1}, {'norm': 'max'},
])
def test_picard_config_validation(kwargs):
    with pytest.raises(ArgumentError):
        PicardConfig(**kwargs)
