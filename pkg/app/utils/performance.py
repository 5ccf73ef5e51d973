"""Run metrics for the end-of-command log line: wall time, RSS, threads."""

from __future__ import annotations
import logging
import os
import threading
import time
from datetime import timedelta

import psutil

logger = logging.getLogger(__name__)


class RunClock:
    """Wall-clock anchor for one CLI invocation."""

    def __init__(self) -> None:
        self._start = time.monotonic()

    def elapsed(self) -> float:
        return time.monotonic() - self._start

    def log_summary(self, command: str) -> None:
        logger.info(
            "%s finished in %s | memory %s | threads %d",
            command, format_elapsed(self.elapsed()), memory_mb(), thread_count(),
        )


def format_elapsed(seconds: float) -> str:
    """Format seconds into HH:mm:ss.SSS."""
    td = timedelta(seconds=seconds)
    total_seconds = int(td.total_seconds())
    hours, remainder = divmod(total_seconds, 3600)
    minutes, secs = divmod(remainder, 60)
    millis = int((td.total_seconds() - total_seconds) * 1000)
    return f"{hours:02d}:{minutes:02d}:{secs:02d}.{millis:03d}"


def memory_mb() -> str:
    """Current process RSS in 'XXX.XX MB' format."""
    process = psutil.Process(os.getpid())
    return f"{process.memory_info().rss / (1024 * 1024):.2f} MB"


def thread_count() -> int:
    return threading.active_count()
