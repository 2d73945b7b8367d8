"""
Exception hierarchy for ionwork
"""

from typing import Optional


class IonworkError(Exception):
    """Base class for every error raised by the simulator"""


class TruncationError(IonworkError):
    """Displacement too large for the retained Fock space"""


class CutoffError(IonworkError):
    """Thermal population beyond the Fock cutoff is not negligible"""


class NonHermitianError(IonworkError):
    """Generator handed to a propagator is not Hermitian"""


class StepTooLargeError(IonworkError):
    """Single propagation step exceeds the phase limit"""


class ConvergenceError(IonworkError):
    """Integrator failed to reach the requested tolerance"""


class DomainError(IonworkError):
    """Time argument outside the protocol window"""


class InfiniteTemperatureError(IonworkError):
    """Equal populations: the effective temperature diverges"""


class NegativeTemperatureError(IonworkError):
    """Population inversion: the effective temperature is negative"""


class IllConditionedError(IonworkError):
    """Time grid cannot resolve the sideband frequency comb"""


class EmptyOverlapError(IonworkError):
    """Forward and backward distributions share no resolvable support"""


class ConfigError(IonworkError):
    """Scenario file failed to parse or validate"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")
