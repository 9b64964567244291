#!/usr/bin/env python3
"""
Structured logging for the simulator.

Every module obtains its logger through getLogger(). Loggers are
SchemaLogger instances whose records are rendered as ECS JSON:
- records below ERROR are written to stdout,
- ERROR and above are written to stderr.
Structured context travels in ``extra`` with dotted keys declared in
logging_objects_with_schema.json.
"""

from __future__ import annotations

import logging
import math
import os
import sys
from functools import lru_cache

import ecs_logging
from logging_objects_with_schema import SchemaLogger

logging.setLoggerClass(SchemaLogger)

_ecs_formatter = ecs_logging.StdlibFormatter()


def _below_error(record: logging.LogRecord) -> bool:
    return record.levelno < logging.ERROR


@lru_cache(maxsize=32)
def _resolve_log_level(level: str | int) -> int:
    """Map a level name or number to a logging constant (INFO if unknown)."""
    if isinstance(level, str):
        return getattr(logging, level.upper(), logging.INFO)
    return int(level)


@lru_cache(maxsize=1)
def _env_log_level() -> str:
    """LOG_LEVEL from the environment, used until settings are loaded."""
    return os.getenv("LOG_LEVEL", "INFO")


def _attach_handlers(logger: logging.Logger) -> None:
    stdout_handler = logging.StreamHandler(sys.stdout)
    stdout_handler.setLevel(logging.DEBUG)
    stdout_handler.addFilter(_below_error)
    stdout_handler.setFormatter(_ecs_formatter)

    stderr_handler = logging.StreamHandler(sys.stderr)
    stderr_handler.setLevel(logging.ERROR)
    stderr_handler.setFormatter(_ecs_formatter)

    logger.addHandler(stdout_handler)
    logger.addHandler(stderr_handler)
    logger.propagate = False


def getLogger(name: str, log_level: str | None = None) -> logging.Logger:
    """Return a configured logger.

    Handlers are attached once per logger name; later calls only adjust
    the level.

    Args:
        name: Logger name (typically __name__)
        log_level: Optional level name. Falls back to LOG_LEVEL from the
            environment when not given.

    Returns:
        Logger writing ECS JSON to stdout/stderr
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        _attach_handlers(logger)

    level = _resolve_log_level(log_level if log_level is not None else _env_log_level())
    if logger.level != level:
        logger.setLevel(level)
    return logger


def set_all_loggers_level(level: str | int) -> None:
    """Apply one level to the root logger and every named logger.

    Called by the CLI once SimulationSettings are loaded.

    Args:
        level: Level name (e.g. "DEBUG") or logging constant
    """
    resolved = _resolve_log_level(level)
    logging.getLogger().setLevel(resolved)
    for logger_name in logging.Logger.manager.loggerDict:
        existing = logging.getLogger(logger_name)
        if existing.level != resolved:
            existing.setLevel(resolved)


def format_angular_frequency(omega: float) -> str:
    """Render an angular frequency with its MHz value for log messages.

    Args:
        omega: Angular frequency in rad/s

    Returns:
        String such as "6.283e+07 rad/s (10.000 MHz)"
    """
    return f"{omega:.4g} rad/s ({omega / (2.0 * math.pi) / 1e6:.3f} MHz)"
