import os
import platform
import sys
import time
from typing import Any, Dict

import psutil

from graphtee.core.logging import app_logger


class HealthCheck:
    """Resource snapshots attached to experiment diagnostics.

    Runs are CPU-bound and long, so each experiment cell records how long
    it took and how much memory the worker process held.
    """

    @staticmethod
    def check_process() -> Dict[str, Any]:
        """Return memory and CPU information about the current process.

        Returns:
            Dict with ``rss_mb``, ``cpu_percent`` and ``status``
        """
        try:
            process = psutil.Process(os.getpid())
            rss_mb = process.memory_info().rss / (1024 * 1024)
            return {
                "status": "healthy",
                "rss_mb": round(rss_mb, 2),
                "cpu_percent": process.cpu_percent(interval=None),
            }
        except Exception as e:
            app_logger.error(f"Error checking process health: {e}")
            return {"status": "error", "message": str(e), "rss_mb": 0.0}

    @staticmethod
    def check_system() -> Dict[str, Any]:
        """Describe the host the run executes on."""
        memory = psutil.virtual_memory()
        return {
            "cpu_count": psutil.cpu_count(logical=True),
            "memory_percent": memory.percent,
            "platform": platform.platform(),
            "python": sys.version.split()[0],
        }


class ResourceTimer:
    """Context manager measuring wall time and resident memory of a block."""

    def __init__(self):
        self.runtime_s = 0.0
        self.peak_rss_mb = 0.0
        self._start = 0.0

    def __enter__(self) -> "ResourceTimer":
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc_info) -> None:
        self.runtime_s = time.perf_counter() - self._start
        self.peak_rss_mb = HealthCheck.check_process().get("rss_mb", 0.0)
