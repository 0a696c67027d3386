"""
Process-level settings for GraphTEE
"""

from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings with environment variable support.

    Run parameters (dataset, training, experiment axes) live in
    ``graphtee.models.config.RunConfig``; these settings only cover how the
    process behaves: logging, default output location and parallelism.
    """

    model_config = SettingsConfigDict(
        env_prefix="GRAPHTEE_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    app_name: str = "graphtee"

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None
    log_json: bool = False

    # Outputs
    out_dir: str = "out"

    # Worker processes for experiment/sweep fan-out
    jobs: int = 1

    # Location of the REDDIT-BINARY TU files for opt-in tests
    reddit_dir: Optional[str] = None

    @field_validator("log_json", mode="before")
    @classmethod
    def parse_log_json(cls, v):
        if isinstance(v, str):
            return v.lower() in ("true", "1", "yes", "on")
        return bool(v)

    @field_validator("log_level")
    @classmethod
    def parse_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {v!r}")
        return level

    @field_validator("jobs")
    @classmethod
    def positive_jobs(cls, v: int) -> int:
        if v < 1:
            raise ValueError("jobs must be >= 1")
        return v


# Global settings instance
settings = Settings()
