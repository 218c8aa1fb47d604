from typing import List, Optional, Sequence


class KawaharaError(Exception):
    """Base class for every failure the library reports.

    `exit_code` is what `kawactl` exits with when the error reaches the CLI.
    """

    exit_code = 1

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.module = module

    def __str__(self) -> str:
        if self.module:
            return f"[{self.module}] {self.message}"
        return self.message


class ConfigurationError(KawaharaError):
    exit_code = 2


class ValidationError(ConfigurationError):
    """Scenario problems, all of them at once."""

    def __init__(self, problems: Sequence[str], module: Optional[str] = "scenario"):
        self.problems: List[str] = list(problems)
        super().__init__("; ".join(self.problems), module)


class ArgumentError(KawaharaError, ValueError):
    exit_code = 2


class PreconditionError(KawaharaError):
    exit_code = 2


class UndefinedRatioError(KawaharaError, ValueError):
    exit_code = 2


class SingularMatrixError(KawaharaError):
    exit_code = 3

    def __init__(self, message: str, pivot_index: int = -1, module: Optional[str] = "mesh"):
        super().__init__(message, module)
        self.pivot_index = pivot_index


class SolverBreakdownError(KawaharaError):
    exit_code = 3

    def __init__(self, message: str, step: int, module: Optional[str] = "solver"):
        super().__init__(f"{message} (step {step})", module)
        self.step = step


class NonConvergenceError(KawaharaError):
    exit_code = 3

    def __init__(self, message: str, step: int, residual: float, module: Optional[str] = "solver"):
        super().__init__(f"{message} (step {step}, last residual {residual:.3e})", module)
        self.step = step
        self.residual = residual


class FixedPointDivergenceError(KawaharaError):
    exit_code = 4

    def __init__(
        self,
        message: str,
        history: Sequence[float],
        rate: float,
        module: Optional[str] = "synthesis",
    ):
        super().__init__(message, module)
        self.history = [float(r) for r in history]
        self.rate = float(rate)
