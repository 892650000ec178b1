from __future__ import annotations

import logging
import os
from dataclasses import dataclass

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class Settings:
    threads: int
    log_level: str
    out_dir: str

    @property
    def log_level_value(self) -> int:
        return logging.getLevelName(self.log_level)


def _parse_int(value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ValueError(f"{name} must be an integer") from exc


def _parse_log_level(value: str) -> str:
    candidate = value.strip().upper()
    if candidate not in LOG_LEVELS:
        raise ValueError(f"SCSFRI_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
    return candidate


def get_settings() -> Settings:
    default_threads = str(os.cpu_count() or 1)
    threads = _parse_int(os.getenv("SCSFRI_THREADS", default_threads), "SCSFRI_THREADS")
    log_level = _parse_log_level(os.getenv("SCSFRI_LOG_LEVEL", "WARNING"))
    out_dir = os.getenv("SCSFRI_OUT_DIR", "./results")

    if threads < 1:
        raise ValueError("SCSFRI_THREADS must be >= 1")

    return Settings(threads=threads, log_level=log_level, out_dir=out_dir)
