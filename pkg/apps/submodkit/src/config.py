"""
Toolkit Settings

Numeric defaults (tolerances, sample counts, enumeration limits) and logging
setup. Values come from ``SUBMODKIT_*`` environment variables or a ``.env``
file; library functions fall back to these when a keyword is left as None.
"""

import sys
from functools import lru_cache

from loguru import logger
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide defaults for the toolkit."""

    model_config = SettingsConfigDict(
        env_prefix="SUBMODKIT_", env_file=".env", extra="ignore"
    )

    tolerance: float = Field(default=1e-9, gt=0, description="Comparison tolerance")
    sampled_checks: int = Field(
        default=10_000, ge=1, description="Triples drawn by sampled checkers"
    )
    symmetry_samples: int = Field(
        default=32, ge=1, description="Random subsets used to verify symmetry"
    )
    mnp_iteration_factor: int = Field(
        default=100, ge=1, description="Min-norm-point cap is factor * n^2 major cycles"
    )
    exhaustive_limit: int = Field(
        default=14, ge=1, description="Largest n for exhaustive checkers"
    )
    enumeration_limit: int = Field(
        default=20, ge=1, description="Largest n for exhaustive label enumeration"
    )
    log_level: str = Field(default="WARNING", description="stderr log level")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def resolve_tolerance(tolerance: float | None) -> float:
    return get_settings().tolerance if tolerance is None else tolerance


def configure_logging(level: str | None = None) -> None:
    """Send all log records to stderr at the given level."""
    logger.remove()
    logger.add(
        sys.stderr,
        level=(level or get_settings().log_level).upper(),
        format="<level>{level: <8}</level> {name}:{function} - {message}",
    )
