import time
from typing import Dict, Optional

import psutil

from utils import Logger, format_file_size

MEMORY_WARNING_PERCENT = 85.0


class RunMonitor:
    """Wall clock, CPU time and resident memory of one CLI run."""

    def __init__(self, label: str = "run"):
        self.label = label
        self.process = psutil.Process()
        self.started: Optional[float] = None
        self.metrics: Dict[str, float] = {}

    def __enter__(self) -> 'RunMonitor':
        self.started = time.perf_counter()
        self._cpu0 = sum(self.process.cpu_times()[:2])
        return self

    def __exit__(self, exc_type, exc, tb):
        self.metrics = self.snapshot()
        Logger.info(
            f"{self.label}: {self.metrics['wall_seconds']:.2f}s wall, "
            f"{self.metrics['cpu_seconds']:.2f}s cpu, "
            f"rss {format_file_size(self.metrics['rss_bytes'])}"
        )
        return False

    def snapshot(self) -> Dict[str, float]:
        memory = psutil.virtual_memory()
        if memory.percent > MEMORY_WARNING_PERCENT:
            Logger.warning(f"High memory usage: {memory.percent}%")
        return {
            'wall_seconds': time.perf_counter() - (self.started or time.perf_counter()),
            'cpu_seconds': sum(self.process.cpu_times()[:2]) - getattr(self, '_cpu0', 0.0),
            'rss_bytes': float(self.process.memory_info().rss),
            'system_memory_percent': float(memory.percent),
        }
