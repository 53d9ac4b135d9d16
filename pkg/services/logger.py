import json
import logging
from datetime import datetime
from typing import Optional, Callable
import contextvars

import config

_LOG_LEVEL = (config.LOG_LEVEL or "INFO").upper()
_configured: set = set()

# Run ID context variable, one per CLI invocation
_run_id_var: contextvars.ContextVar[Optional[str]] = contextvars.ContextVar("run_id", default=None)

def set_run_id(run_id: Optional[str]):
    """Set run_id for current context. Returns a token for reset."""
    return _run_id_var.set(run_id)

def reset_run_id(token):
    """Reset run_id context using token from set_run_id."""
    try:
        _run_id_var.reset(token)
    except Exception:
        pass

def get_run_id() -> Optional[str]:
    return _run_id_var.get()

class RunIdFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        # Only set if not already provided via extras
        if not hasattr(record, "run_id"):
            record.run_id = _run_id_var.get()
        return True

_BUILTIN_ATTRS = {
    "name", "msg", "args", "levelname", "levelno", "pathname", "filename", "module",
    "exc_info", "exc_text", "stack_info", "lineno", "funcName", "created", "msecs",
    "relativeCreated", "thread", "threadName", "processName", "process", "message",
    "taskName",
}

class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "ts": datetime.fromtimestamp(record.created).astimezone().isoformat(),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        # Attach extra attributes (excluding built-ins)
        for k, v in record.__dict__.items():
            if k.startswith("_") or k in _BUILTIN_ATTRS:
                continue
            try:
                json.dumps(v)
                payload[k] = v
            except Exception:
                payload[k] = str(v)
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False)

def get_logger(name: str = "darksignal", level: Optional[str] = None) -> logging.Logger:
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(JsonFormatter())
        handler.addFilter(RunIdFilter())
        logger.addHandler(handler)
        if config.LOG_FILE:
            file_handler = logging.FileHandler(config.LOG_FILE)
            file_handler.setFormatter(JsonFormatter())
            file_handler.addFilter(RunIdFilter())
            logger.addHandler(file_handler)
    logger.setLevel(getattr(logging, (level or _LOG_LEVEL), logging.INFO))
    logger.propagate = False
    _configured.add(name)
    return logger

def set_log_level(level: str) -> None:
    """Apply level to every logger handed out so far and to those created later"""
    global _LOG_LEVEL
    _LOG_LEVEL = level.upper()
    for name in _configured:
        logging.getLogger(name).setLevel(getattr(logging, _LOG_LEVEL, logging.INFO))

# Thread-pool workers start with an empty context; carry run_id across
def wrap_worker(fn: Callable, run_id: Optional[str]):
    def _wrapped(*args, **kwargs):
        token = set_run_id(run_id)
        try:
            return fn(*args, **kwargs)
        finally:
            reset_run_id(token)
    return _wrapped
