# config/config.py
from typing import Optional

import psutil
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def available_parallelism() -> int:
    """CPUs this process may run on (affinity-aware where the OS supports it)."""
    try:
        return max(1, len(psutil.Process().cpu_affinity()))
    except (AttributeError, NotImplementedError, psutil.Error):
        return max(1, psutil.cpu_count(logical=True) or 1)


class HarnessSettings(BaseSettings):
    """Experiment harness configuration"""
    model_config = SettingsConfigDict(env_prefix="ENDOCOST_", env_file=".env", extra="ignore")

    workers: int = Field(default_factory=available_parallelism, ge=1)
    record_wall_clock: bool = False
    default_seed_count: int = Field(default=16, ge=1)
    min_horizon_exponent: int = Field(default=10, ge=0)
    max_horizon_exponent: int = Field(default=16, ge=0)


class SolverSettings(BaseSettings):
    """Simplex QP oracle configuration"""
    model_config = SettingsConfigDict(env_prefix="ENDOCOST_SOLVER_", env_file=".env", extra="ignore")

    tolerance: float = Field(default=1e-10, gt=0)
    max_iterations: int = Field(default=100_000, ge=1)


class MetricsSettings(BaseSettings):
    """Prometheus textfile export"""
    model_config = SettingsConfigDict(env_prefix="ENDOCOST_METRICS_", env_file=".env", extra="ignore")

    enabled: bool = True
    textfile: str = "metrics.prom"


class Settings(BaseSettings):
    """Main application settings"""
    model_config = SettingsConfigDict(
        env_prefix="ENDOCOST_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    environment: str = "development"
    log_level: str = "WARNING"
    log_file: Optional[str] = None

    # Sub-configurations
    harness: HarnessSettings = Field(default_factory=HarnessSettings)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    metrics: MetricsSettings = Field(default_factory=MetricsSettings)

    @property
    def default_horizons(self) -> list[int]:
        return [2**k for k in range(self.harness.min_horizon_exponent, self.harness.max_horizon_exponent + 1)]


# Global settings instance
settings = Settings()
