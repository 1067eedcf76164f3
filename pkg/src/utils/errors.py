"""
Exception hierarchy shared by the simulation library and the CLI.

Every error carries an ``exit_code`` so the entry point can translate a
failure into the documented process status without inspecting messages:
    2  usage / validation
    3  numeric / integration failure
    4  I/O
"""

from typing import Any, List, Optional


class SimulationError(Exception):
    """Base class for every failure raised by this package"""

    exit_code: int = 1

    # constructor arguments, so errors survive the trip back from a worker process
    _init_args: tuple = ()

    def __reduce__(self):
        if self._init_args:
            return type(self), self._init_args
        return super().__reduce__()


class DomainError(SimulationError, ValueError):
    """A precondition of an operation was violated"""

    exit_code = 2


class ConfigError(SimulationError):
    """Config file could not be parsed or failed semantic validation"""

    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self._init_args = (message, key, line)
        self.key = key
        self.line = line
        location = ""
        if key is not None:
            location = f" [{key}]"
        elif line is not None:
            location = f" [line {line}]"
        super().__init__(f"{message}{location}")


class ResourceError(SimulationError):
    """Requested representation exceeds the configured size cap"""

    exit_code = 3


class NumericError(SimulationError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result"""

    exit_code = 3


class TruncationError(NumericError):
    """Dropped Fock-space tail carries more weight than allowed"""

    def __init__(self, message: str, tail_weight: float, dim: int):
        self._init_args = (message, tail_weight, dim)
        self.tail_weight = tail_weight
        self.dim = dim
        super().__init__(f"{message} (tail weight {tail_weight:.3e} at dim {dim}; increase dim)")


class IntegrationError(NumericError):
    """Adaptive integrator gave up before reaching the requested time"""

    def __init__(self, message: str, t_reached: float):
        self._init_args = (message, t_reached)
        self.t_reached = t_reached
        super().__init__(f"{message} (integration stopped at gt = {t_reached:.6g})")


class ConvergenceError(NumericError):
    """Steady-state search ran out of time without relaxing"""

    def __init__(self, residual: float, t_max: float, hint: str = ""):
        self._init_args = (residual, t_max, hint)
        self.residual = residual
        self.t_max = t_max
        message = (
            f"steady state not reached by gt = {t_max:.6g}: "
            f"||drho/dt||_F = {residual:.3e}"
        )
        if hint:
            message = f"{message}. {hint}"
        super().__init__(message)


class DegenerateSteadyStateError(NumericError):
    """Liouvillian kernel is not one-dimensional; the steady state depends on the initial state"""

    def __init__(self, basis: List[Any]):
        self._init_args = (basis,)
        self.basis = basis
        super().__init__(
            f"Liouvillian kernel has dimension {len(basis)}; "
            "use method='evolve' with an initial state"
        )


class OutputError(SimulationError, OSError):
    """Writing or reading a result file failed"""

    exit_code = 4

    def __init__(self, message: str, path: str):
        self._init_args = (message, path)
        self.path = path
        super().__init__(f"{message}: {path}")
