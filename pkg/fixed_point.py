"""Damped Picard iteration with optional Anderson mixing and rate measurement."""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import stats

from errors import ArgumentError, FixedPointDivergenceError
from mesh import quad_weights
from utils import Logger

BLOWUP_FACTOR = 1e6
GROWTH_STREAK = 5
NORMS = ('sup', 'l2')


@dataclass(frozen=True)
class PicardConfig:
    tol: float = 1e-10
    max_iter: int = 200
    damping: float = 1.0
    gamma: float = 0.0
    anderson_depth: int = 0
    norm: str = 'sup'

    def __post_init__(self):
        if not self.tol > 0:
            raise ArgumentError("tol must be positive", "fixed_point")
        if self.max_iter < 1:
            raise ArgumentError("max_iter must be at least 1", "fixed_point")
        if not 0.0 < self.damping <= 1.0:
            raise ArgumentError(f"damping must lie in (0, 1], got {self.damping}", "fixed_point")
        if self.gamma < 0:
            raise ArgumentError("gamma must be non-negative", "fixed_point")
        if self.anderson_depth < 0:
            raise ArgumentError("anderson_depth must be non-negative", "fixed_point")
        if self.norm not in NORMS:
            raise ArgumentError(f"norm must be one of {NORMS}, got {self.norm!r}", "fixed_point")


@dataclass
class FixedPointResult:
    solution: np.ndarray
    iterations: int
    residuals: List[float]
    rate: float
    rate_r2: float
    final_sup: float
    final_l2: float
    l2_history: List[float] = field(default_factory=list)


def measure_rate(residuals) -> Tuple[float, float]:
    """Geometric fit r_k ≈ C ρ^k; returns (ρ, R²)."""
    r = np.asarray([x for x in residuals if np.isfinite(x) and x > 0.0], dtype=float)
    if r.size < 2:
        return 0.0, 1.0
    if r.size == 2:
        return float(r[1] / r[0]), 1.0
    fit = stats.linregress(np.arange(r.size), np.log(r))
    return float(np.exp(fit.slope)), float(fit.rvalue ** 2)


class DivergenceMonitor:
    """Collects residuals and raises as soon as an iteration is clearly lost."""

    def __init__(self, label: str, module: str = "synthesis"):
        self.label = label
        self.module = module
        self.history: List[float] = []
        self._streak = 0

    def record(self, residual: float):
        if not np.isfinite(residual):
            self.history.append(float('inf'))
            self._fail("produced non-finite iterates")
        if self.history and residual > self.history[-1]:
            self._streak += 1
        else:
            self._streak = 0
        self.history.append(float(residual))
        first = self.history[0]
        if first > 0 and residual > BLOWUP_FACTOR * first:
            self._fail(f"residual grew by more than {BLOWUP_FACTOR:.0e}")
        if self._streak >= GROWTH_STREAK and residual > first:
            self._fail(f"residual grew for {self._streak} consecutive iterations")

    def exhausted(self, max_iter: int):
        rate, _ = measure_rate(self.history)
        if rate >= 1.0:
            self._fail(f"no convergence in {max_iter} iterations; measured rate {rate:.3f} >= 1, "
                       "shorten the horizon T or shrink the data")
        self._fail(f"no convergence in {max_iter} iterations; measured rate {rate:.3f}, "
                   "raise max_iter or loosen tol")

    def _fail(self, reason: str):
        rate, _ = measure_rate(self.history)
        raise FixedPointDivergenceError(f"{self.label} {reason}", self.history, rate, self.module)


def weighted_norms(residual: np.ndarray, times: np.ndarray, gamma: float) -> Tuple[float, float]:
    w = np.exp(-gamma * times) * residual
    dt = times[1] - times[0] if times.size > 1 else 1.0
    l2 = float(np.sqrt(max(float(w ** 2 @ quad_weights(times.size, dt)), 0.0)))
    return float(np.max(np.abs(w))), l2


def iterate(apply_map: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, times: np.ndarray,
            cfg: PicardConfig, label: str = "fixed point",
            progress: Optional[Callable[[int, float], None]] = None) -> FixedPointResult:
    """Iterate x <- x + λ(Ax - x) until ||Ax - x|| < tol.

    With `anderson_depth` m > 0 the update mixes the last m residual
    differences (least squares through numpy.linalg.lstsq).
    """
    monitor = DivergenceMonitor(label)
    l2_history: List[float] = []
    x = np.array(x0, dtype=float)
    xs: List[np.ndarray] = []
    fs: List[np.ndarray] = []
    lam = cfg.damping

    for k in range(1, cfg.max_iter + 1):
        ax = apply_map(x)
        res = ax - x
        if not np.all(np.isfinite(res)):
            monitor.record(float('inf'))
        sup, l2 = weighted_norms(res, times, cfg.gamma)
        l2_history.append(l2)
        monitor.record(sup if cfg.norm == 'sup' else l2)
        if progress is not None:
            progress(k, monitor.history[-1])
        if k % 10 == 0:
            Logger.debug(f"{label}: iteration {k} residual {monitor.history[-1]:.3e}")
        # tol is absolute for iterates of size <= 1 and relative above
        if monitor.history[-1] < cfg.tol * max(1.0, float(np.max(np.abs(ax)))):
            rate, r2 = measure_rate(monitor.history)
            return FixedPointResult(ax, k, list(monitor.history), rate, r2, sup, l2, l2_history)

        if cfg.anderson_depth == 0:
            x = x + lam * res
            continue

        xs.append(x)
        fs.append(res)
        if len(fs) > cfg.anderson_depth + 1:
            xs.pop(0)
            fs.pop(0)
        if len(fs) == 1:
            x = x + lam * res
            continue
        dX = np.column_stack([xs[i + 1] - xs[i] for i in range(len(xs) - 1)])
        dF = np.column_stack([fs[i + 1] - fs[i] for i in range(len(fs) - 1)])
        coef, *_ = np.linalg.lstsq(dF, res, rcond=None)
        x = x + lam * res - (dX + lam * dF) @ coef

    monitor.exhausted(cfg.max_iter)
