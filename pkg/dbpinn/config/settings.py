"""
Runtime Settings
Environment-driven knobs (a .env file is honoured) that sit outside the
experiment configuration
"""

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from dbpinn.core import ConfigurationError

load_dotenv()


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{name}: expected an integer, got {raw!r}")
    return value


@dataclass(frozen=True)
class Settings:
    """Process-wide settings read once from the environment"""

    output_dir: Optional[str]
    log_level: str
    num_threads: int
    workers: Optional[int]

    @classmethod
    def from_env(cls) -> "Settings":
        workers = os.getenv("DBPINN_WORKERS")
        return cls(
            output_dir=os.getenv("DBPINN_OUTPUT_DIR") or None,
            log_level=os.getenv("DBPINN_LOG_LEVEL", "INFO").upper(),
            num_threads=_int_env("DBPINN_NUM_THREADS", 1),
            workers=_int_env("DBPINN_WORKERS", 1) if workers else None,
        )


_settings: Optional[Settings] = None


def get_settings(refresh: bool = False) -> Settings:
    """Get or create the global settings"""
    global _settings
    if _settings is None or refresh:
        _settings = Settings.from_env()
    return _settings
