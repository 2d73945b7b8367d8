from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class NoiseSpec(BaseModel):
    """
    White amplitude noise xi(t) with <xi(t) xi(t+s)> = sigma^2 delta(s).

    sigma is in sqrt(s); the discretized noise is piecewise constant over dt
    with per-step variance sigma^2/dt.
    """

    model_config = ConfigDict(frozen=True)

    sigma: float = Field(..., ge=0, description="Noise strength, sqrt(s)")
    dt: float = Field(..., gt=0, description="Discretization step, s")
    seed: int = Field(default=0, ge=0, lt=2**64)


class DephasingSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(..., ge=0, description="Uniform dephasing rate, 1/s")


class EnsembleAverage(BaseModel):
    """Trajectory-averaged density matrix with element-wise standard errors"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    stderr_real: np.ndarray
    stderr_imag: np.ndarray
    trajectories: int = Field(..., ge=1)
    seed: Optional[int] = None

    def within(self, reference: np.ndarray, sigmas: float = 3.0, floor: float = 1e-12) -> np.ndarray:
        """Element-wise agreement mask, real and imaginary parts separately"""
        delta = self.mean - reference
        real_ok = np.abs(delta.real) <= sigmas * self.stderr_real + floor
        imag_ok = np.abs(delta.imag) <= sigmas * self.stderr_imag + floor
        return real_ok & imag_ok
