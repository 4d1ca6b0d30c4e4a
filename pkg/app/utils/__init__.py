"""
Utilities package
"""
from app.utils.logging import get_logger, log_execution_time, StructuredLogger
from app.utils.performance import PerformanceMonitor, PerformanceTracker

__all__ = [
    # Logging
    "get_logger",
    "log_execution_time",
    "StructuredLogger",

    # Performance
    "PerformanceMonitor",
    "PerformanceTracker",
]
