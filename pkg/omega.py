"""Polynomial test functions ω for the integral overdetermination condition.

Admissible ω vanish with their first derivative at both ends, have
ω''(0) = 0, and need ω''(L) != 0 for the control to be recoverable.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from errors import ArgumentError
from mesh import Grid, GridFunction

MAX_ORDER = 5
ENDPOINT_TOLERANCE = 1e-12
CURVATURE_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class TestFunction:
    coefficients: Tuple[float, ...]
    L: float
    normalized: bool = False
    derivatives: Tuple[Tuple[float, ...], ...] = field(init=False, repr=False)

    # keep pytest from treating the class as a test case
    __test__ = False

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(self.coefficients))
        if not coeffs:
            coeffs = (0.0,)
        object.__setattr__(self, 'coefficients', coeffs)
        object.__setattr__(self, 'L', float(self.L))
        chain = [coeffs]
        for _ in range(MAX_ORDER):
            chain.append(tuple(P.polyder(np.array(chain[-1])).tolist()) or (0.0,))
        object.__setattr__(self, 'derivatives', tuple(chain))

    @property
    def degree(self) -> int:
        nonzero = np.nonzero(self.coefficients)[0]
        return int(nonzero[-1]) if nonzero.size else -1

    def __call__(self, x, k: int = 0):
        return P.polyval(x, self.derivatives[k])


@dataclass
class MembershipReport:
    endpoint_values: Dict[str, float]
    curvature_at_L: float
    degree: int
    passed: bool
    failures: List[str]

    def to_dict(self) -> Dict:
        return {
            'endpoint_values': dict(self.endpoint_values),
            'curvature_at_L': self.curvature_at_L,
            'degree': self.degree,
            'pass': self.passed,
            'failures': list(self.failures),
        }


def canonical_omega(L: float, normalize: bool = False) -> TestFunction:
    """ω(x) = x³(x - L)², optionally scaled so that ω''(L) = 1."""
    if not L > 0:
        raise ArgumentError(f"domain length must be positive, got L={L}", "omega")
    coeffs = np.array([0.0, 0.0, 0.0, L * L, -2.0 * L, 1.0])
    if normalize:
        coeffs = coeffs / (2.0 * L ** 3)
    return TestFunction(tuple(coeffs), L, normalized=normalize)


def polynomial_omega(coefficients: Sequence[float], L: float) -> TestFunction:
    if not L > 0:
        raise ArgumentError(f"domain length must be positive, got L={L}", "omega")
    return TestFunction(tuple(coefficients), L)


def scaled(omega: TestFunction, sigma: float) -> TestFunction:
    return TestFunction(tuple(sigma * c for c in omega.coefficients), omega.L)


def eval_deriv(omega: TestFunction, k: int, x: float) -> float:
    if int(k) != k or not 0 <= k <= MAX_ORDER:
        raise ArgumentError(f"derivative order must be in 0..{MAX_ORDER}, got {k}", "omega")
    slack = ENDPOINT_TOLERANCE * max(1.0, omega.L)
    if not -slack <= x <= omega.L + slack:
        raise ArgumentError(f"x={x} outside [0, {omega.L}]", "omega")
    return float(omega(x, int(k)))


def sample(omega: TestFunction, grid: Grid, k: int = 0) -> GridFunction:
    return GridFunction(grid, omega(grid.nodes, k))


def kernel(omega: TestFunction, grid: Grid) -> np.ndarray:
    """Samples of ω' + ω''' - ω⁽⁵⁾ on the grid nodes."""
    x = grid.nodes
    return omega(x, 1) + omega(x, 3) - omega(x, 5)


def check_membership(omega: TestFunction) -> MembershipReport:
    L = omega.L
    values = {
        'omega(0)': float(omega(0.0)),
        'omega(L)': float(omega(L)),
        "omega'(0)": float(omega(0.0, 1)),
        "omega'(L)": float(omega(L, 1)),
        "omega''(0)": float(omega(0.0, 2)),
    }
    curvature = float(omega(L, 2))
    failures = [f"{name} = {value:.3e}" for name, value in values.items()
                if abs(value) > ENDPOINT_TOLERANCE]
    if abs(curvature) < CURVATURE_TOLERANCE:
        failures.append(f"omega''(L) = {curvature:.3e} is numerically zero")
    if omega.degree < MAX_ORDER and not failures:
        failures.append(f"degree {omega.degree} < {MAX_ORDER}")
    return MembershipReport(values, curvature, omega.degree, not failures, failures)
