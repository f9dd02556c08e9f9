import logging
import sys
from functools import lru_cache
from pathlib import Path

import structlog
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.constants import DIMENSION_GUARD, EXACT_DIM_LIMIT, SPARSE_DIMENSION_GUARD

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """
    Runtime configuration, read from ``GZSC_*`` environment variables.
    """
    model_config = SettingsConfigDict(env_prefix="GZSC_", env_file=".env", extra="ignore")

    cache_dir: Path = Field(default=Path.home() / ".cache" / "gzsc", description="Result cache directory")
    log_level: str = Field(default="INFO", description="Root log level")
    log_json: bool = Field(default=False, description="Render logs as JSON lines")
    max_workers: int = Field(default=4, ge=1, description="Worker threads for p-sweeps")
    dimension_guard: int = Field(default=DIMENSION_GUARD, ge=1)
    sparse_dimension_guard: int = Field(default=SPARSE_DIMENSION_GUARD, ge=1)
    exact_dim_limit: int = Field(default=EXACT_DIM_LIMIT, ge=0)
    mp_dps: int = Field(default=34, ge=15, description="mpmath working precision in decimal digits")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Ensure the level is one the logging module knows"""
        level = v.upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level: {v}")
        return level


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the process-wide settings."""
    return Settings()


def configure_logging(level: str = None, json_logs: bool = None) -> None:
    """
    Route stdlib logging through structlog's formatter.

    Args:
        level: Override for the configured log level
        json_logs: Override for JSON rendering
    """
    settings = get_settings()
    level = (level or settings.log_level).upper()
    json_logs = settings.log_json if json_logs is None else json_logs

    shared_processors = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
    ]
    renderer = (
        structlog.processors.JSONRenderer()
        if json_logs
        else structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())
    )
    formatter = structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=shared_processors,
        processors=[structlog.stdlib.ProcessorFormatter.remove_processors_meta, renderer],
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level)
    logger.debug(f"Logging configured at level {level}")
