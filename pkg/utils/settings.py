from __future__ import annotations

import os
import sys
from functools import lru_cache

from loguru import logger
from pydantic import AliasChoices, Field

try:
    from pydantic_settings import BaseSettings, SettingsConfigDict

    HAS_PYDANTIC_SETTINGS = True
except ImportError:  # pragma: no cover - offline/local fallback
    BaseSettings = None  # type: ignore[assignment]
    SettingsConfigDict = dict  # type: ignore[assignment]
    HAS_PYDANTIC_SETTINGS = False

from utils.config import LOG_LEVEL


def _env_value(*names: str, default: str | None = None) -> str | None:
    for name in names:
        value = os.getenv(name)
        if value is not None and value != "":
            return value
    return default


def _env_int(*names: str, default: int) -> int:
    value = _env_value(*names)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        return default


if HAS_PYDANTIC_SETTINGS:

    class Settings(BaseSettings):
        """Process settings loaded from environment variables and .env."""

        model_config = SettingsConfigDict(
            env_file=".env",
            env_file_encoding="utf-8",
            extra="ignore",
        )

        threads: int = Field(default=1, ge=1, validation_alias=AliasChoices("LHM_THREADS"))
        log_level: str = Field(default=LOG_LEVEL, validation_alias=AliasChoices("LHM_LOG_LEVEL"))

else:

    class Settings:  # type: ignore[no-redef]
        """Fallback settings loader when pydantic-settings is unavailable."""

        def __init__(self) -> None:
            self.threads = max(1, _env_int("LHM_THREADS", default=1))
            self.log_level = (_env_value("LHM_LOG_LEVEL", default=LOG_LEVEL) or LOG_LEVEL).upper()


@lru_cache
def get_settings() -> Settings:
    return Settings()


def configure_logging(level: str | None = None) -> None:
    """Install the single stderr sink used by every command."""
    logger.remove()
    logger.add(
        sys.stderr,
        level=(level or get_settings().log_level).upper(),
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {message}",
    )
