from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelVariant(str, Enum):
    FREE_ION = "free_ion"
    CARRIER = "carrier"
    RED_SIDEBAND = "red_sideband"
    BLUE_SIDEBAND = "blue_sideband"
    BICHROMATIC = "bichromatic"
    DRAGGED_OSCILLATOR = "dragged_oscillator"
    DRIVEN_TLS = "driven_tls"


class RampShape(str, Enum):
    LINEAR_UP = "linear_up"
    LINEAR_DOWN = "linear_down"
    CONSTANT = "constant"


# Parameters that must be strictly positive when present
POSITIVE_PARAMETERS = ("trap_frequency", "nu", "rabi_0", "tau", "ramp_down")


class DriveRamp(BaseModel):
    """One segment of a drive envelope; peak is an angular frequency"""

    model_config = ConfigDict(frozen=True)

    shape: RampShape
    peak: float = Field(..., description="Peak drive, rad/s")
    duration: float = Field(..., gt=0, description="Segment length, s")

    def value(self, t: float) -> float:
        """Envelope at local time t in [0, duration]"""
        if self.shape == RampShape.LINEAR_UP:
            return self.peak * t / self.duration
        if self.shape == RampShape.LINEAR_DOWN:
            return self.peak * (1.0 - t / self.duration)
        return self.peak

    @property
    def start_value(self) -> float:
        return self.value(0.0)

    @property
    def end_value(self) -> float:
        return self.value(self.duration)


class RampSchedule(BaseModel):
    """Consecutive ramp segments starting at t = 0"""

    model_config = ConfigDict(frozen=True)

    segments: List[DriveRamp] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_continuous(self):
        for left, right in zip(self.segments, self.segments[1:]):
            scale = max(1.0, abs(left.end_value), abs(right.start_value))
            if abs(left.end_value - right.start_value) > 1e-12 * scale:
                raise ValueError(
                    f"Ramp discontinuous at splice: {left.end_value} -> {right.start_value}"
                )
        return self

    @classmethod
    def up_down(cls, peak: float, tau: float, ramp_down: float) -> "RampSchedule":
        return cls(
            segments=[
                DriveRamp(shape=RampShape.LINEAR_UP, peak=peak, duration=tau),
                DriveRamp(shape=RampShape.LINEAR_DOWN, peak=peak, duration=ramp_down),
            ]
        )

    @property
    def duration(self) -> float:
        return sum(segment.duration for segment in self.segments)

    @property
    def breakpoints(self) -> List[float]:
        """Interior splice times"""
        points, elapsed = [], 0.0
        for segment in self.segments[:-1]:
            elapsed += segment.duration
            points.append(elapsed)
        return points

    def value(self, t: float) -> float:
        elapsed = 0.0
        for segment in self.segments:
            if t <= elapsed + segment.duration:
                return segment.value(min(max(t - elapsed, 0.0), segment.duration))
            elapsed += segment.duration
        return self.segments[-1].end_value


class ModelSpec(BaseModel):
    """Declarative description of one Hamiltonian and its drive parameters"""

    model_config = ConfigDict(frozen=True)

    variant: ModelVariant
    parameters: Dict[str, float] = Field(default_factory=dict)
    cutoff: Optional[int] = Field(default=None, ge=1, description="Fock cutoff; None for spin-only models")
    spin: bool = True
    # Housed for completeness; no implemented protocol uses it
    zeeman_frequency: Optional[float] = None

    @model_validator(mode="after")
    def _check_parameters(self):
        for name in POSITIVE_PARAMETERS:
            if name in self.parameters and self.parameters[name] <= 0:
                raise ValueError(f"Parameter '{name}' must be > 0, got {self.parameters[name]}")
        if self.variant == ModelVariant.DRAGGED_OSCILLATOR:
            nu = self.parameters.get("nu")
            trap = self.parameters.get("trap_frequency")
            if nu is not None and trap is not None and nu > trap:
                raise ValueError(f"Dragged oscillator needs nu <= trap frequency ({nu} > {trap})")
        return self

    def require(self, *names: str) -> List[float]:
        missing = [name for name in names if name not in self.parameters]
        if missing:
            raise ValueError(f"{self.variant.value} model missing parameters: {missing}")
        return [self.parameters[name] for name in names]
