# settings.py

import logging
import os
import sys
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import BaseModel, Field

# Load environment variables from .env file if present
load_dotenv()


def _env(name: str, default: str) -> str:
    value = os.getenv(name)
    return default if value is None or value == "" else value


class Settings(BaseModel):
    """Process-wide defaults. Builders take explicit keyword overrides on top of these."""

    threads: int = Field(default=4, ge=1)
    log_level: str = "WARNING"
    coreset_c_size: float = Field(default=4.0, gt=0)
    partition_c1: float = Field(default=1.0, gt=0)
    min_halve_size: int = Field(default=16, ge=2)
    stall_fraction: float = Field(default=1 / 16, gt=0, lt=1)
    median_replicas: int = Field(default=15, ge=1)
    svm_presample_c: float = Field(default=8.0, gt=0)
    svm_norm_bound: float = Field(default=1.0, gt=0)
    sensitivity_scale: float = Field(default=1.0, gt=0)
    fourier_c: float = Field(default=1.0, gt=0)

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            threads=_env("SUBSKETCH_THREADS", "4"),
            log_level=_env("SUBSKETCH_LOG_LEVEL", "WARNING").upper(),
            coreset_c_size=_env("SUBSKETCH_CORESET_C_SIZE", "4.0"),
            partition_c1=_env("SUBSKETCH_PARTITION_C1", "1.0"),
            min_halve_size=_env("SUBSKETCH_MIN_HALVE_SIZE", "16"),
            stall_fraction=_env("SUBSKETCH_STALL_FRACTION", "0.0625"),
            median_replicas=_env("SUBSKETCH_MEDIAN_REPLICAS", "15"),
            svm_presample_c=_env("SUBSKETCH_SVM_PRESAMPLE_C", "8.0"),
            svm_norm_bound=_env("SUBSKETCH_SVM_NORM_BOUND", "1.0"),
            sensitivity_scale=_env("SUBSKETCH_SENSITIVITY_SCALE", "1.0"),
            fourier_c=_env("SUBSKETCH_FOURIER_C", "1.0"),
        )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings.from_env()


def configure_logging(level: str | None = None) -> None:
    """
    Installs a single stderr handler on the root logger. Only the CLI calls this;
    library modules just use their own module logger.

    Args:
        level (str | None): Level name, defaults to the configured SUBSKETCH_LOG_LEVEL.
    """
    level = (level or get_settings().log_level).upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        logging.Formatter("ts=%(asctime)s level=%(levelname)s logger=%(name)s msg=%(message)s")
    )
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)
