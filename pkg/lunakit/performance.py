"""
Timing statistics for the solver, GDOP maps and Monte Carlo trials

Stats are kept per operation name ('step1', 'step2', 'step3', 'gdop_map',
'trial') and only leave the process through export_stats, so result files
stay deterministic.
"""
import itertools
import json
import threading
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, Iterator, Tuple

RECENT_WINDOW = 100


@dataclass
class OperationStats:
    """Accumulated timings of one operation (seconds)"""

    count: int = 0
    errors: int = 0
    total_time: float = 0.0
    fastest: float = float('inf')
    slowest: float = 0.0
    recent: Deque[float] = field(default_factory=lambda: deque(maxlen=RECENT_WINDOW))

    def add(self, duration: float, success: bool):
        self.count += 1
        self.total_time += duration
        self.fastest = min(self.fastest, duration)
        self.slowest = max(self.slowest, duration)
        self.recent.append(duration)
        if not success:
            self.errors += 1

    def to_dict(self) -> Dict[str, Any]:
        recent = list(self.recent)
        return {
            'total_calls': self.count,
            'total_errors': self.errors,
            'error_rate': self.errors / self.count,
            'success_rate': (self.count - self.errors) / self.count,
            'total_time_s': self.total_time,
            'avg_time_ms': self.total_time / self.count * 1000,
            'min_time_ms': self.fastest * 1000,
            'max_time_ms': self.slowest * 1000,
            'recent_avg_ms': sum(recent) / len(recent) * 1000 if recent else 0.0,
        }


class PerformanceMonitor:
    """Thread-safe timing bookkeeping keyed by operation name"""

    def __init__(self):
        self._operations: Dict[str, OperationStats] = {}
        self._pending: Dict[str, Tuple[str, float]] = {}
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def start_timing(self, operation: str) -> str:
        """Start timing an operation; returns the id to pass to end_timing"""
        with self._lock:
            timing_id = f"{operation}#{next(self._counter)}"
            self._pending[timing_id] = (operation, time.perf_counter())
        return timing_id

    def end_timing(self, timing_id: str, success: bool = True):
        end_time = time.perf_counter()
        with self._lock:
            pending = self._pending.pop(timing_id, None)
        if pending is None:
            return
        operation, start_time = pending
        self.record(operation, end_time - start_time, success)

    def record(self, operation: str, duration: float, success: bool = True):
        """Record a duration measured elsewhere (e.g. in a worker process)"""
        with self._lock:
            self._operations.setdefault(operation, OperationStats()).add(duration, success)

    @contextmanager
    def timed(self, operation: str) -> Iterator[None]:
        """Time the enclosed block, counting it as failed if it raises"""
        timing_id = self.start_timing(operation)
        try:
            yield
        except Exception:
            self.end_timing(timing_id, success=False)
            raise
        self.end_timing(timing_id)

    def get_stats(self) -> Dict[str, Any]:
        with self._lock:
            return {name: stats.to_dict() for name, stats in self._operations.items()
                    if stats.count > 0}

    def reset(self):
        with self._lock:
            self._operations.clear()
            self._pending.clear()

    def export_stats(self, filename: str):
        """Export statistics to a JSON file"""
        stats = self.get_stats()
        with open(filename, 'w') as f:
            json.dump(stats, f, indent=2, sort_keys=True)


# Global performance monitor instance
perf_monitor = PerformanceMonitor()
