"""
Tests for the JSON log formatter and run id propagation
"""

import json
import logging

from services.logger import (
    JsonFormatter,
    RunIdFilter,
    get_logger,
    get_run_id,
    reset_run_id,
    set_log_level,
    set_run_id,
)


def _record(msg="pattern_built", **extra):
    record = logging.LogRecord("services.fingerprint", logging.INFO, __file__, 1, msg, None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


def test_payload_carries_extras():
    payload = json.loads(JsonFormatter().format(_record(component="services.fingerprint", frames=100)))
    assert payload["msg"] == "pattern_built"
    assert payload["level"] == "info"
    assert payload["logger"] == "services.fingerprint"
    assert payload["component"] == "services.fingerprint"
    assert payload["frames"] == 100
    assert "lineno" not in payload


def test_unserialisable_extras_become_strings():
    payload = json.loads(JsonFormatter().format(_record(shape=(3, 4), path=object())))
    assert payload["shape"] == [3, 4]
    assert isinstance(payload["path"], str)


def test_run_id_filter():
    token = set_run_id("run-42")
    try:
        record = _record()
        RunIdFilter().filter(record)
        assert record.run_id == "run-42"
        assert json.loads(JsonFormatter().format(record))["run_id"] == "run-42"
    finally:
        reset_run_id(token)
    assert get_run_id() is None


def test_explicit_run_id_is_kept():
    record = _record(run_id="given")
    RunIdFilter().filter(record)
    assert record.run_id == "given"


def test_get_logger_installs_one_handler():
    first = get_logger("tests.logger")
    second = get_logger("tests.logger", level="DEBUG")
    assert first is second
    assert len(second.handlers) == 1
    assert second.level == logging.DEBUG
    assert not second.propagate


def test_set_log_level_reaches_existing_and_new_loggers():
    existing = get_logger("tests.level_existing")
    try:
        set_log_level("error")
        assert existing.level == logging.ERROR
        assert get_logger("tests.level_new").level == logging.ERROR
    finally:
        set_log_level("INFO")
    assert existing.level == logging.INFO
