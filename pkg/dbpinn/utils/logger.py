"""
Structured Logging Utility for dbpinn
Console output with colored levels, optional JSON-lines files per run directory
"""

import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Union

BASE_LOGGER = 'dbpinn'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _base_logger() -> logging.Logger:
    """The 'dbpinn' logger owns every handler; module loggers propagate to it"""
    base = logging.getLogger(BASE_LOGGER)
    if not any(getattr(h, '_dbpinn_console', False) for h in base.handlers):
        base.setLevel(logging.DEBUG)
        base.propagate = False

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler._dbpinn_console = True
        level = os.getenv('DBPINN_LOG_LEVEL', 'INFO').upper()
        console_handler.setLevel(getattr(logging, level, logging.INFO))
        console_handler.setFormatter(ColoredFormatter(LOG_FORMAT, datefmt=DATE_FORMAT))
        base.addHandler(console_handler)
    return base


class RunLogger:
    """Logger wrapper that attaches keyword context to every record"""

    def __init__(self, name: str):
        self.name = name
        _base_logger()
        self.logger = logging.getLogger(name)

    def info(self, message: str, **kwargs):
        self.logger.info(message, extra={'context': kwargs})

    def warning(self, message: str, **kwargs):
        self.logger.warning(message, extra={'context': kwargs})

    def error(self, message: str, **kwargs):
        self.logger.error(message, extra={'context': kwargs})

    def debug(self, message: str, **kwargs):
        self.logger.debug(message, extra={'context': kwargs})

    def success(self, message: str, **kwargs):
        self.logger.info(f"SUCCESS: {message}", extra={'context': kwargs})

    def training_step(self, step: int, **values):
        """Log one history row of a training run"""
        summary = ", ".join(f"{k}={_short(v)}" for k, v in values.items())
        self.info(f"step {step}: {summary}", step=step, **values)

    def run_event(self, run_id: str, event_type: str, **kwargs):
        self.info(f"Run {event_type}: {run_id}", run_id=run_id, event_type=event_type, **kwargs)

    def metric(self, metric_name: str, value: Any, unit: str = ""):
        self.info(
            f"Metric: {metric_name} = {value} {unit}".rstrip(),
            metric=metric_name,
            value=value,
            unit=unit,
        )


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4e}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_short(v) for v in value) + "]"
    return str(value)


class ColoredFormatter(logging.Formatter):
    """Formatter with ANSI color codes for console output"""

    COLORS = {
        'DEBUG': '\033[36m',     # Cyan
        'INFO': '\033[32m',      # Green
        'WARNING': '\033[33m',   # Yellow
        'ERROR': '\033[31m',     # Red
        'CRITICAL': '\033[35m',  # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        # work on a copy so the JSON handler still sees the plain level name
        record = logging.makeLogRecord(record.__dict__)
        log_color = self.COLORS.get(record.levelname, self.RESET)
        record.levelname = f"{log_color}{record.levelname}{self.RESET}"
        return super().format(record)


class JSONFormatter(logging.Formatter):
    """Formatter that outputs one JSON object per record"""

    def format(self, record):
        log_data: Dict[str, Any] = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno,
        }

        if hasattr(record, 'context'):
            log_data['context'] = record.context

        if record.exc_info:
            log_data['exception'] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


def attach_log_dir(log_dir: Union[str, Path], name: str = BASE_LOGGER) -> Path:
    """Add a JSON-lines handler writing <log_dir>/<name>_structured.jsonl"""
    base = _base_logger()
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    path = (log_dir / f"{name}_structured.jsonl").resolve()

    for handler in base.handlers:
        if isinstance(handler, logging.FileHandler) and Path(handler.baseFilename) == path:
            return path

    json_handler = logging.FileHandler(path, encoding='utf-8')
    json_handler.setLevel(logging.DEBUG)
    json_handler.setFormatter(JSONFormatter())
    base.addHandler(json_handler)
    return path


def detach_log_dirs():
    base = _base_logger()
    for handler in list(base.handlers):
        if isinstance(handler, logging.FileHandler):
            base.removeHandler(handler)
            handler.close()


_loggers: Dict[str, RunLogger] = {}


def get_logger(name: str) -> RunLogger:
    """Get or create a logger instance under the 'dbpinn' hierarchy"""
    if not (name == BASE_LOGGER or name.startswith(BASE_LOGGER + '.')):
        name = f"{BASE_LOGGER}.{name}"
    if name not in _loggers:
        _loggers[name] = RunLogger(name)
    return _loggers[name]


__all__ = [
    'RunLogger',
    'ColoredFormatter',
    'JSONFormatter',
    'attach_log_dir',
    'detach_log_dirs',
    'get_logger',
]
