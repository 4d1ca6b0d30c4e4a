"""
Performance Monitoring Utilities

Track wall-clock time of protocol stages so reports can carry a
timing section when requested.
"""
import statistics
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone

UTC = timezone.utc  # datetime.UTC alias is Python 3.11+
from typing import Any, Dict, List, Optional

from app.utils.logging import get_logger

logger = get_logger("performance")


@dataclass
class PerformanceMetric:
    """Single performance measurement"""
    name: str
    duration_ms: float
    timestamp: datetime
    tags: Dict[str, str] = field(default_factory=dict)


class PerformanceMonitor:
    """
    Collect stage timings for one or more sessions

    Slow stages (above ``alert_threshold_ms``) are logged at WARNING.
    """

    def __init__(self, alert_threshold_ms: float = 60_000):
        self.metrics: List[PerformanceMetric] = []
        self.alert_threshold_ms = alert_threshold_ms
        self._lock = threading.Lock()

    def record(
        self,
        name: str,
        duration_ms: float,
        tags: Optional[Dict[str, str]] = None
    ):
        """Record a performance metric"""
        metric = PerformanceMetric(
            name=name,
            duration_ms=duration_ms,
            timestamp=datetime.now(UTC),
            tags=tags or {}
        )

        with self._lock:
            self.metrics.append(metric)

        if duration_ms > self.alert_threshold_ms:
            logger.warning(
                f"Slow stage detected: {name}",
                duration_ms=round(duration_ms, 2),
                threshold_ms=self.alert_threshold_ms,
                **(tags or {})
            )

    def get_stats(self, name: Optional[str] = None) -> Dict[str, Any]:
        """Get statistics for one stage name (or all metrics)"""
        with self._lock:
            filtered = [m for m in self.metrics if name is None or m.name == name]

        if not filtered:
            return {"count": 0, "name": name}

        durations = [m.duration_ms for m in filtered]
        return {
            "count": len(filtered),
            "name": name,
            **self._summarize(durations),
        }

    def get_aggregated_stats(self) -> Dict[str, Dict[str, float]]:
        """Get stats aggregated by stage name"""
        with self._lock:
            by_name = defaultdict(list)
            for metric in self.metrics:
                by_name[metric.name].append(metric.duration_ms)

        return {
            name: {"count": len(durations), **self._summarize(durations)}
            for name, durations in sorted(by_name.items())
        }

    def reset(self):
        with self._lock:
            self.metrics = []

    @classmethod
    def _summarize(cls, durations: List[float]) -> Dict[str, float]:
        return {
            "min_ms": min(durations),
            "max_ms": max(durations),
            "mean_ms": statistics.mean(durations),
            "median_ms": statistics.median(durations),
            "p95_ms": cls._percentile(durations, 95),
        }

    @staticmethod
    def _percentile(data: List[float], percentile: float) -> float:
        """Calculate percentile"""
        if not data:
            return 0.0

        sorted_data = sorted(data)
        index = int((percentile / 100.0) * len(sorted_data))
        index = min(index, len(sorted_data) - 1)

        return sorted_data[index]


class PerformanceTracker:
    """
    Context manager for tracking one stage

    Usage:
        with PerformanceTracker("error_correction", monitor):
            ...
    """

    def __init__(
        self,
        name: str,
        monitor: PerformanceMonitor,
        tags: Optional[Dict[str, str]] = None
    ):
        self.name = name
        self.tags = tags or {}
        self.monitor = monitor
        self.start_time: Optional[float] = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.start_time is not None:
            duration_ms = (time.perf_counter() - self.start_time) * 1000
            self.monitor.record(self.name, duration_ms, self.tags)
        return False
