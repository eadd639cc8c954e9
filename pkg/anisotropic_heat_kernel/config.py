"""
Process configuration using environment variables.
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables (prefix HEATKERNEL_)."""

    model_config = SettingsConfigDict(
        env_prefix="HEATKERNEL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",  # Ignore unrelated environment variables
    )

    # Application configuration
    log_level: str = "INFO"
    output_directory: str = "./runs"  # Directory where run artifacts are written
    random_seed: int = 20240601  # seed of a run config that names none

    # Numerical defaults
    angular_resolution: int = 720  # unit-xi angles for suprema over the circle
    fourier_lattice: int = 256  # points per axis of the frequency lattice
    fourier_cutoff: float = 1e-18  # truncate where exp(-A) drops below this
    sweeping_tolerance: float = 1e-8
    sweeping_max_iterations: int = 5000
    krylov_tolerance: float = 1e-10
    crank_nicolson_tolerance: float = 1e-8


# Global settings instance
settings = Settings()
