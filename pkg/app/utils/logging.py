"""
Structured Logging Utilities

Provides consistent, structured logging across the simulator
with session context and execution timing.
"""
import functools
import json
import logging
import time
from contextvars import ContextVar
from datetime import datetime, timezone

UTC = timezone.utc  # datetime.UTC alias is Python 3.11+
from typing import Any, Callable, Dict, Optional


class StructuredLogger:
    """
    Structured logger with context and timing

    Logs are output as JSON objects so session runs can be parsed
    and replayed from log files. Set ``json_output=False`` for plain
    ``message key=value`` lines.
    """

    def __init__(self, name: str, json_output: bool = True):
        self.logger = logging.getLogger(name)
        # Sweep points run on worker threads; each thread keeps its own context.
        self._context: ContextVar[Dict[str, Any]] = ContextVar(f"log_context.{name}", default={})
        self.json_output = json_output

    @property
    def context(self) -> Dict[str, Any]:
        """Context bound in the calling thread"""
        return dict(self._context.get())

    def set_context(self, **kwargs):
        """Set context that will be included in all log messages"""
        self._context.set({**self._context.get(), **kwargs})

    def clear_context(self):
        """Clear current context"""
        self._context.set({})

    def _format_message(self, level: str, message: str, **extra) -> Dict[str, Any]:
        """Format log message as structured JSON"""
        log_data = {
            "timestamp": datetime.now(UTC).isoformat(),
            "level": level,
            "message": message,
            "logger": self.logger.name,
            **self._context.get(),
            **extra
        }
        return log_data

    def _render(self, level: str, message: str, **extra) -> str:
        log_data = self._format_message(level, message, **extra)
        if self.json_output:
            return json.dumps(log_data, ensure_ascii=False, default=str)
        fields = " ".join(
            f"{key}={value}" for key, value in log_data.items()
            if key not in ("timestamp", "level", "message", "logger")
        )
        return f"{message} {fields}".rstrip()

    def debug(self, message: str, **extra):
        """Log debug message"""
        if self.logger.isEnabledFor(logging.DEBUG):
            self.logger.debug(self._render("DEBUG", message, **extra))

    def info(self, message: str, **extra):
        """Log info message"""
        self.logger.info(self._render("INFO", message, **extra))

    def warning(self, message: str, **extra):
        """Log warning message"""
        self.logger.warning(self._render("WARNING", message, **extra))

    def error(self, message: str, **extra):
        """Log error message"""
        self.logger.error(self._render("ERROR", message, **extra))

    def critical(self, message: str, **extra):
        """Log critical message"""
        self.logger.critical(self._render("CRITICAL", message, **extra))


def log_execution_time(logger: Optional[StructuredLogger] = None):
    """
    Decorator to log function execution time

    Usage:
        @log_execution_time(logger)
        def run_session(...):
            ...
    """
    def decorator(func: Callable):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                if logger:
                    logger.error(
                        f"Function {func.__name__} failed",
                        duration_ms=round((time.perf_counter() - start) * 1000, 2),
                        function=func.__name__,
                        error=str(e)
                    )
                raise

            if logger:
                logger.debug(
                    f"Function {func.__name__} completed",
                    duration_ms=round((time.perf_counter() - start) * 1000, 2),
                    function=func.__name__
                )
            return result

        return wrapper

    return decorator


def get_logger(name: str) -> StructuredLogger:
    """Get or create a structured logger"""
    from app.config import settings

    return StructuredLogger(name, json_output=settings.log_json)


def configure_logging(level: str = "INFO") -> None:
    """Configure the root handler once for CLI runs"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
