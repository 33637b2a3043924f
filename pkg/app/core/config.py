"""
Configuration management for HVBK Spectral
"""
import os
from pydantic_settings import BaseSettings
from pydantic import Field


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables
    """

    # Kernel parallelism
    HVBK_THREADS: int = Field(
        default=1,
        description="Worker count handed to scipy.fft (-1 uses every core)"
    )

    # Directory paths
    DATA_DIRECTORY: str = Field(
        default="./data",
        description="Root path for checked-in data files"
    )

    OUTPUT_DIRECTORY: str = Field(
        default="./output",
        description="Default destination for diagnostics, snapshots and reports"
    )

    FROZEN_CONSTANTS_PATH: str = Field(
        default="./data/frozen_constants.json",
        description="Fixture holding frozen estimate constants"
    )

    # Numerical configuration
    DEFAULT_OVERSAMPLE: int = Field(
        default=2,
        description="Oversampling factor of the friction grid relative to 2N+1"
    )

    STRICT_MODE: bool = Field(
        default=False,
        description="Enforce theorem-regime hypotheses (p > 5/2) on every config"
    )

    ORACLE_MAX_N: int = Field(
        default=4,
        description="Largest truncation the brute-force convolution oracle accepts"
    )

    PRESET_MAX_RETRIES: int = Field(
        default=5,
        description="Redraw attempts for floor-certified random fields"
    )

    HERMITIAN_TOLERANCE: float = Field(
        default=1e-12,
        description="Relative imaginary residue tolerated when synthesizing real fields"
    )

    DIVERGENCE_TOLERANCE: float = Field(
        default=1e-13,
        description="Relative tolerance on k.coeff(k) for divergence-free fields"
    )

    EXP_OVERFLOW_LIMIT: float = Field(
        default=700.0,
        description="Largest admissible exponent sigma*<k> in Gevrey weights"
    )

    FRICTION_FLOOR_FRACTION: float = Field(
        default=0.5,
        description="Fraction of m_f used as the singularity guard inside the RHS"
    )

    # Application settings
    APP_NAME: str = Field(
        default="HVBKSpectral",
        description="Application name"
    )

    APP_VERSION: str = Field(
        default="0.1.0",
        description="Application version"
    )

    DEBUG: bool = Field(
        default=False,
        description="Debug mode flag"
    )

    class Config:
        """Pydantic configuration"""
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """
    Get application settings instance

    Returns:
        Settings: Application configuration
    """
    return settings


def validate_configuration() -> bool:
    """
    Validate numeric settings and make sure output directories exist

    Returns:
        bool: True if configuration is valid, raises exception otherwise

    Raises:
        ValueError: If a setting is out of range
    """
    current = get_settings()

    for directory in [current.DATA_DIRECTORY, current.OUTPUT_DIRECTORY]:
        os.makedirs(directory, exist_ok=True)

    if current.HVBK_THREADS == 0 or current.HVBK_THREADS < -1:
        raise ValueError("HVBK_THREADS must be a positive integer or -1")

    if current.DEFAULT_OVERSAMPLE < 1:
        raise ValueError("DEFAULT_OVERSAMPLE must be at least 1")

    if not 0.0 < current.FRICTION_FLOOR_FRACTION <= 1.0:
        raise ValueError("FRICTION_FLOOR_FRACTION must lie in (0, 1]")

    if current.ORACLE_MAX_N < 1 or current.ORACLE_MAX_N > 6:
        raise ValueError("ORACLE_MAX_N must be between 1 and 6")

    return True
