"""
Data models for thermal preparation, projective measurements and readout
"""

from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

STOCHASTIC_TOL = 1e-8


class ThermalSpec(BaseModel):
    """
    Initial thermal state: mean phonon number for the oscillator, or
    (ground, excited) populations for a two-level system.
    """

    model_config = ConfigDict(frozen=True)

    nbar: Optional[float] = Field(default=None, ge=0)
    populations: Optional[Tuple[float, float]] = None
    quantum: Optional[float] = Field(default=None, gt=0, description="Level spacing, rad/s")

    @model_validator(mode="after")
    def _check_one_form(self):
        if (self.nbar is None) == (self.populations is None):
            raise ValueError("Give exactly one of nbar or populations")
        if self.populations is not None:
            ground, excited = self.populations
            if ground < 0 or excited < 0:
                raise ValueError(f"Populations must be >= 0, got {self.populations}")
            if abs(ground + excited - 1.0) > 1e-12:
                raise ValueError(f"Populations must sum to 1, got {ground + excited}")
        return self


class TransitionMatrix(BaseModel):
    """P[n, m]: probability of final eigenstate m given initial eigenstate n"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    entries: np.ndarray

    @field_validator("entries", mode="before")
    @classmethod
    def _as_stochastic(cls, value):
        array = np.asarray(value, dtype=float)
        if array.ndim != 2:
            raise ValueError(f"Transition matrix must be 2-D, got shape {array.shape}")
        if array.min(initial=0.0) < -1e-12:
            raise ValueError(f"Negative transition probability {array.min():.3e}")
        array = np.clip(array, 0.0, None)
        rows = array.sum(axis=1)
        if np.max(np.abs(rows - 1.0), initial=0.0) > STOCHASTIC_TOL:
            raise ValueError(f"Rows must sum to 1 (worst {rows[np.argmax(np.abs(rows - 1.0))]:.12f})")
        return array

    @classmethod
    def identity(cls, dimension: int) -> "TransitionMatrix":
        return cls(entries=np.eye(dimension))

    @property
    def dimension(self) -> int:
        return int(self.entries.shape[0])

    def is_doubly_stochastic(self, tol: float = STOCHASTIC_TOL) -> bool:
        return bool(np.max(np.abs(self.entries.sum(axis=0) - 1.0), initial=0.0) <= tol)

    def off_diagonal_mass(self, weights: Optional[np.ndarray] = None) -> float:
        """Probability of leaving the initial level (uniform weights when omitted)"""
        off = 1.0 - np.diag(self.entries)
        if weights is None:
            return float(off.sum())
        return float(np.dot(weights, off))


class WorkRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_initial: int = Field(..., ge=0)
    m_final: int = Field(..., ge=0)
    work: float = Field(..., description="Work in quanta")
    weight: float = Field(default=1.0, ge=0)


class PulseKind(str, Enum):
    CARRIER = "carrier"
    RED_SIDEBAND = "red_sideband"
    BLUE_SIDEBAND = "blue_sideband"


class DetectionErrorModel(BaseModel):
    """Pulse and detector imperfections; all zero means ideal readout"""

    model_config = ConfigDict(frozen=True)

    transfer_error: float = Field(default=0.0, ge=0, lt=1, description="Per-pulse failure probability")
    dark_count: float = Field(default=0.0, ge=0, lt=1, description="P(fluorescence | dark)")
    bright_infidelity: float = Field(default=0.0, ge=0, lt=1, description="P(no fluorescence | bright)")

    @property
    def is_ideal(self) -> bool:
        return self.transfer_error == 0 and self.dark_count == 0 and self.bright_infidelity == 0


class DetectionStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    pulses: List[PulseKind]
    fluorescence: bool
    probability: float = Field(..., ge=0, le=1, description="Conditional probability of this outcome")


class DetectionTrace(BaseModel):
    """
    Outcome of one iterative projective readout.

    projected_n is -1 when no fluorescence appeared within the detection cap.
    """

    model_config = ConfigDict(frozen=True)

    steps: List[DetectionStep]
    projected_n: int = Field(..., ge=-1)
    probability: float = Field(..., ge=0, le=1)

    @model_validator(mode="after")
    def _check_consistent(self):
        product = float(np.prod([step.probability for step in self.steps])) if self.steps else 1.0
        if abs(product - self.probability) > 1e-9 * max(1.0, product):
            raise ValueError(f"Trace probability {self.probability} != product of steps {product}")
        return self


class BsbSignal(BaseModel):
    """Blue-sideband excitation P_up(t) for sideband Rabi rate `rabi`"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    p_up: np.ndarray
    rabi: float = Field(..., gt=0, description="Sideband Rabi rate eta*Omega_eff, rad/s")

    @field_validator("times", "p_up", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return np.asarray(value, dtype=float).reshape(-1)

    @model_validator(mode="after")
    def _check_signal(self):
        if self.times.shape != self.p_up.shape:
            raise ValueError(f"times and p_up differ in length: {self.times.size} vs {self.p_up.size}")
        if self.p_up.size and (self.p_up.min() < -1e-12 or self.p_up.max() > 1 + 1e-12):
            raise ValueError("p_up must lie in [0, 1]")
        return self


class PopulationEstimate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    populations: np.ndarray
    residual: float = Field(..., ge=0)
    condition_number: float


class HeatingFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    rate: float = Field(..., description="Heating rate, quanta/s")
    intercept: float
    rate_stderr: float
