"""
Process-level defaults read from the environment (and a .env file if present).

    BECSIM_OUT_DIR     output directory          (data/results)
    BECSIM_WORKERS     sweep worker processes    (1)
    BECSIM_LOG_LEVEL   logging level             (INFO)
    BECSIM_EXACT_CAP   exact spin-model dim cap  (20000)

CLI flags override every value here.
"""

from dataclasses import dataclass
from typing import Optional
import logging
import os

from dotenv import load_dotenv

from src.utils.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

VERSION = "0.1.0"


@dataclass(frozen=True)
class Settings:
    out_dir: str = "data/results"
    workers: int = 1
    log_level: str = "INFO"
    exact_cap: int = 20000


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got '{raw}'", key=name) from None
    if value < 1:
        raise ConfigError(f"environment variable {name} must be positive, got {value}", key=name)
    return value


def load_settings() -> Settings:
    return Settings(
        out_dir=os.getenv("BECSIM_OUT_DIR") or Settings.out_dir,
        workers=_int_env("BECSIM_WORKERS", Settings.workers),
        log_level=(os.getenv("BECSIM_LOG_LEVEL") or Settings.log_level).upper(),
        exact_cap=_int_env("BECSIM_EXACT_CAP", Settings.exact_cap),
    )


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the settings instance"""
    global _settings
    if _settings is None:
        _settings = load_settings()
        logger.debug(f"settings loaded: {_settings}")
    return _settings
