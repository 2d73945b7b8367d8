"""
Scenario configuration and result bundle models
"""

from enum import Enum
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.measurement import TransitionMatrix
from src.models.statistics import WorkDistribution


class Experiment(str, Enum):
    DRAGGED_OSCILLATOR = "dragged-oscillator"
    DRIVEN_TLS = "driven-tls"


class StrictModel(BaseModel):
    """Unknown keys are errors in scenario files"""

    model_config = ConfigDict(extra="forbid")


class OscillatorParameters(StrictModel):
    nu_khz: float = Field(default=20.0, gt=0, description="Trap frequency nu / 2pi, kHz")
    drive_amplitude_khz: float = Field(default=15.0, description="Drive amplitude A / 2pi, kHz")
    target_alpha: Optional[List[float]] = Field(
        default=None, description="Calibrate A per protocol to these |alpha| instead of using drive_amplitude_khz"
    )
    tau_us: List[float] = Field(default_factory=lambda: [5.0, 25.0, 45.0], min_length=1)
    ramp_down_us: float = Field(default=50.0, gt=0)
    nbar: float = Field(default=0.157, ge=0)

    @model_validator(mode="after")
    def _check_values(self):
        if any(t <= 0 for t in self.tau_us):
            raise ValueError("tau_us values must be > 0")
        if self.target_alpha is not None and any(a < 0 for a in self.target_alpha):
            raise ValueError("target_alpha values must be >= 0")
        return self


class TlsProtocol(StrictModel):
    tau_us: float = Field(..., gt=0)
    gamma_khz: float = Field(default=0.0, ge=0, description="Dephasing rate in kHz (x1e3 1/s)")


def _default_tls_protocols() -> List[TlsProtocol]:
    return [
        TlsProtocol(tau_us=50.0, gamma_khz=0.0),
        TlsProtocol(tau_us=10.0, gamma_khz=0.0),
        TlsProtocol(tau_us=5.0, gamma_khz=0.0),
        TlsProtocol(tau_us=5.0, gamma_khz=448.0),
        TlsProtocol(tau_us=5.0, gamma_khz=1340.0),
    ]


class TlsParameters(StrictModel):
    rabi_khz: float = Field(default=50.0, gt=0, description="Omega0 / 2pi, kHz")
    t_eff_uk: float = Field(default=5.63, gt=0, description="Effective temperature, microkelvin")
    protocols: List[TlsProtocol] = Field(default_factory=_default_tls_protocols, min_length=1)


class NumericsSettings(StrictModel):
    cutoff: int = Field(default=32, ge=2)
    integrator_tol: float = Field(default=1e-8, gt=0)
    trajectory_steps: int = Field(default=1000, ge=1000, description="Noise steps per protocol duration")
    cross_check: bool = Field(default=True, description="Compare analytic and integrated oscillator transitions")


class SamplingSettings(StrictModel):
    shots: int = Field(default=100_000, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    bootstrap_resamples: int = Field(default=200, ge=100)


class OutputSettings(StrictModel):
    out_dir: str = "results"


class ScenarioConfig(StrictModel):
    experiment: Experiment
    oscillator: Optional[OscillatorParameters] = None
    tls: Optional[TlsParameters] = None
    numerics: NumericsSettings = Field(default_factory=NumericsSettings)
    sampling: SamplingSettings = Field(default_factory=SamplingSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)

    @model_validator(mode="after")
    def _fill_experiment_section(self):
        if self.experiment == Experiment.DRAGGED_OSCILLATOR:
            if self.tls is not None:
                raise ValueError("'tls' section given for a dragged-oscillator scenario")
            if self.oscillator is None:
                self.oscillator = OscillatorParameters()
        else:
            if self.oscillator is not None:
                raise ValueError("'oscillator' section given for a driven-tls scenario")
            if self.tls is None:
                self.tls = TlsParameters()
        return self

    @classmethod
    def default(cls, experiment: Experiment) -> "ScenarioConfig":
        return cls(experiment=experiment)


class ProtocolPoint(BaseModel):
    """One drive protocol of a scenario"""

    model_config = ConfigDict(frozen=True)

    index: int
    label: str
    tau_us: float
    gamma_khz: float = 0.0
    target_alpha: Optional[float] = None


class ProtocolResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    point: ProtocolPoint
    quantum: float = Field(..., description="Angular frequency work is quoted in, rad/s")
    temperature: float
    initial_spectrum: List[float]
    final_spectrum: List[float]
    transitions: TransitionMatrix
    exact: WorkDistribution
    sampled: Optional[WorkDistribution] = None
    records: Optional[pd.DataFrame] = None
    report: Dict[str, Any] = Field(default_factory=dict)
    checks: Dict[str, Dict[str, Any]] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check["passed"] for check in self.checks.values())


class ScenarioBundle(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ScenarioConfig
    protocols: List[ProtocolResult]
    checks: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    errors: List[str] = Field(default_factory=list)

    @property
    def rng_consumed(self) -> bool:
        return self.config.sampling.shots > 0

    @property
    def passed(self) -> bool:
        return not self.errors and all(p.passed for p in self.protocols) and all(
            check["passed"] for check in self.checks.values()
        )
