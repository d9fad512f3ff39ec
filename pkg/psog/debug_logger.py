#!/usr/bin/env python3
"""
PSOG Debug Logger

Structured JSON event logging for simulation runs.
Enabled when PSOG_DEBUG=1 is set; entries go to $PSOG_LOG_DIR/psog_debug.log.
"""

import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict

import numpy as np

_TRUTHY = ('1', 'true', 'yes')


def _to_jsonable(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def is_debug_enabled() -> bool:
    """Check if debug mode is enabled"""
    return os.getenv('PSOG_DEBUG', '0').lower() in _TRUTHY


class SimpleDebugger:
    """Minimal JSON-lines debugger for simulation runs"""

    def __init__(self):
        self.enabled = is_debug_enabled()
        self.logger = logging.getLogger("psog")
        if self.enabled:
            self._setup_logging()

    def _setup_logging(self):
        """Attach a file handler when debug is enabled"""
        log_dir = Path(os.getenv('PSOG_LOG_DIR', '/tmp/psog_logs'))
        log_dir.mkdir(parents=True, exist_ok=True)

        handler = logging.FileHandler(log_dir / "psog_debug.log", mode='a')
        handler.setFormatter(logging.Formatter('%(asctime)s - %(message)s'))
        self.logger.addHandler(handler)
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False

    def log(self, event_type: str, data: Dict[str, Any]):
        """Log event if debug enabled"""
        if not self.enabled:
            return

        entry = {
            "timestamp": datetime.now().isoformat(),
            "event": event_type,
            "data": data
        }
        self.logger.info(json.dumps(entry, default=_to_jsonable))

    def log_timing(self, stage: str, duration_ms: float, **kwargs):
        """Log a timed pipeline stage (render, calibration, sweep cell, shift unit)"""
        data = {"stage": stage, "duration_ms": round(duration_ms, 3)}
        data.update(kwargs)
        self.log("timing", data)

    def log_warning(self, warning_type: str, message: str, context: Dict[str, Any] = None):
        """Log a recoverable condition"""
        data = {"warning_type": warning_type, "message": message}
        if context:
            data["context"] = context
        self.log("warning", data)

    def log_error(self, error_type: str, message: str, context: Dict[str, Any] = None):
        """Log error with context"""
        data = {"error_type": error_type, "message": message}
        if context:
            data["context"] = context
        self.log("error", data)


# Global debugger instance
debugger = SimpleDebugger()


# Convenience functions
def debug_log(event_type: str, data: Dict[str, Any]):
    """Quick debug logging"""
    debugger.log(event_type, data)


def debug_timing(stage: str, duration_ms: float, **kwargs):
    """Quick timing logging"""
    debugger.log_timing(stage, duration_ms, **kwargs)


def debug_warning(warning_type: str, message: str, context: Dict[str, Any] = None):
    """Quick warning logging"""
    debugger.log_warning(warning_type, message, context)


def debug_error(error_type: str, message: str, context: Dict[str, Any] = None):
    """Quick error logging"""
    debugger.log_error(error_type, message, context)
