"""
Configuration management for the ionwork simulator
"""

from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide numerics and I/O defaults"""

    model_config = SettingsConfigDict(
        env_prefix="IONWORK_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",  # Ignore unrelated keys in .env
    )

    app_name: str = "ionwork"
    app_version: str = "1.0.0"
    debug: bool = Field(default=False)

    # Fock space
    fock_cutoff: int = Field(default=32, ge=1, description="Default Fock cutoff N")

    # Integrators
    integrator_tol: float = Field(default=1e-8, gt=0, description="Unitary propagation tolerance")
    max_step_halvings: int = Field(default=14, ge=1)
    dephasing_rtol: float = Field(default=1e-10, gt=0)
    dephasing_atol: float = Field(default=1e-12, gt=0)
    dephasing_method: Literal["DOP853", "RK45"] = "DOP853"
    trajectory_min_steps: int = Field(default=1000, ge=1)

    # Sampling
    shot_block_size: int = Field(default=4096, ge=1, description="Shots per RNG stream block")
    bootstrap_resamples: int = Field(default=200, ge=100)

    # Estimators
    merge_tolerance: float = Field(default=1e-9, gt=0, description="Work support merge tolerance, quanta")
    crooks_floor_exact: float = Field(default=1e-6, gt=0)
    crooks_min_counts: int = Field(default=5, ge=1)

    # Output and runtime
    output_dir: str = Field(default="results")
    log_level: str = Field(default="INFO")
    jobs: int = Field(default=1, ge=1)


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings"""
    return settings
