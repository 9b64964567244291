"""
Tests for logging configuration.
"""

import io
import json
import logging
from datetime import datetime, timezone

from logging_config import format_angular_frequency, getLogger, set_all_loggers_level


def _capture(logger: logging.Logger) -> tuple[io.StringIO, logging.Handler]:
    """Attach a buffer handler that reuses the logger's ECS formatter."""
    stream = io.StringIO()
    handler = logging.StreamHandler(stream)
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logger.handlers[0].formatter)
    logger.addHandler(handler)
    return stream, handler


def test_logging_format_ecs_json() -> None:
    """Logger should output ECS JSON with a UTC timestamp."""
    logger = getLogger("test_logging_format")
    stream, handler = _capture(logger)
    try:
        logger.info("Test message")
        log_data = json.loads(stream.getvalue().strip())

        assert log_data["message"] == "Test message"
        assert "log.level" in log_data
        timestamp = log_data["@timestamp"].replace("Z", "+00:00")
        parsed = datetime.fromisoformat(timestamp)
        assert parsed.tzinfo == timezone.utc
        assert abs((datetime.now(timezone.utc) - parsed).total_seconds()) < 10
    finally:
        logger.removeHandler(handler)


def test_logger_does_not_propagate() -> None:
    """Records should not reach the root logger twice."""
    logger = getLogger("test_no_propagate")
    assert logger.propagate is False


def test_error_records_go_to_stderr_handler_only() -> None:
    """The stdout handler filters out ERROR and above."""
    logger = getLogger("test_split_streams")
    stdout_handler, stderr_handler = logger.handlers[:2]
    record = logging.LogRecord("x", logging.ERROR, __file__, 1, "boom", None, None)

    assert not stdout_handler.filter(record)
    assert stderr_handler.level == logging.ERROR


def test_logging_get_logger_with_existing_logger() -> None:
    """getLogger should reuse existing handlers."""
    logger1 = getLogger("test_reuse_logger")
    count = len(logger1.handlers)
    logger2 = getLogger("test_reuse_logger")

    assert logger2 is logger1
    assert len(logger2.handlers) == count


def test_logging_resolve_log_level() -> None:
    """_resolve_log_level should accept names, ints and unknown names."""
    from logging_config import _resolve_log_level

    assert _resolve_log_level(logging.DEBUG) == logging.DEBUG
    assert _resolve_log_level("warning") == logging.WARNING
    assert _resolve_log_level("no-such-level") == logging.INFO


def test_set_all_loggers_level() -> None:
    """set_all_loggers_level should update every named logger."""
    logger = getLogger("test_level_update", "INFO")
    try:
        set_all_loggers_level("DEBUG")
        assert logger.level == logging.DEBUG
    finally:
        set_all_loggers_level("INFO")


def test_format_angular_frequency() -> None:
    """Angular frequencies render with their MHz value."""
    import math

    text = format_angular_frequency(2.0 * math.pi * 10e6)

    assert text.endswith("(10.000 MHz)")
    assert "rad/s" in text
