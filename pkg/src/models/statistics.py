from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Provenance(str, Enum):
    EXACT = "exact"
    SAMPLED = "sampled"


class WorkDistribution(BaseModel):
    """Sparse work distribution on a sorted support (quanta)"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    support: np.ndarray
    probabilities: np.ndarray
    provenance: Provenance = Provenance.EXACT
    shots: Optional[int] = Field(default=None, ge=0)
    counts: Optional[np.ndarray] = None

    @field_validator("support", "probabilities", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return np.asarray(value, dtype=float).reshape(-1)

    @model_validator(mode="after")
    def _check_distribution(self):
        if self.support.shape != self.probabilities.shape:
            raise ValueError("support and probabilities differ in length")
        if self.support.size > 1 and np.any(np.diff(self.support) <= 0):
            raise ValueError("support must be strictly increasing")
        if self.probabilities.size and self.probabilities.min() < 0:
            raise ValueError("probabilities must be >= 0")
        if self.probabilities.size and abs(self.probabilities.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {self.probabilities.sum():.12f}")
        if self.provenance == Provenance.SAMPLED and self.shots is None:
            raise ValueError("sampled distributions need a shot count")
        return self

    @property
    def is_empty(self) -> bool:
        return self.support.size == 0

    def probability_at(self, work: float, tol: float = 1e-9) -> float:
        if self.is_empty:
            return 0.0
        index = int(np.argmin(np.abs(self.support - work)))
        return float(self.probabilities[index]) if abs(self.support[index] - work) <= tol else 0.0

    def count_at(self, work: float, tol: float = 1e-9) -> int:
        if self.counts is None or self.is_empty:
            return 0
        index = int(np.argmin(np.abs(self.support - work)))
        return int(self.counts[index]) if abs(self.support[index] - work) <= tol else 0

    def stderr(self) -> np.ndarray:
        """Binomial standard error per support point (zero when exact)"""
        if self.provenance == Provenance.EXACT or not self.shots:
            return np.zeros_like(self.probabilities)
        return np.sqrt(self.probabilities * (1.0 - self.probabilities) / self.shots)


class WorkMoments(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    variance: float = Field(..., ge=0)
    std: float = Field(..., ge=0)
    dissipated_mean: float


class CrooksPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    work: float
    lhs: float = Field(..., description="ln(P_F(W) / P_B(-W))")
    rhs: float = Field(..., description="beta (W - dF)")
    forward_count: Optional[int] = None
    backward_count: Optional[int] = None


class CrooksResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: List[CrooksPoint]
    excluded: List[float] = Field(default_factory=list, description="Work values below the floor")
    floor: float

    @property
    def max_deviation(self) -> float:
        return max((abs(p.lhs - p.rhs) for p in self.points), default=0.0)


class CrooksFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    slope: float
    intercept: float
    points: int = Field(..., ge=2)
