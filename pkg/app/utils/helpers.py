"""Shared utility functions: ordered parallel map, display rounding, tables, JSON."""

from __future__ import annotations
import argparse
import json
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Sequence, TypeVar

import numpy as np

from app.config import settings

T = TypeVar("T")
R = TypeVar("R")

# ── Parallel map ──────────────────────────────────────────────────────────

def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> List[R]:
    """Apply *fn* to every item and return results in input order.

    Runs on a thread pool when ``settings.WORKERS > 1``; callers reduce the
    returned list in order, so results do not depend on the thread count.
    """
    items = list(items)
    workers = settings.WORKERS if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))

# ── Display helpers ───────────────────────────────────────────────────────

def round_display(value: float | None, digits: int = 6) -> str:
    """Format a bound for the human-readable table (library values stay unrounded)."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "—"
    return f"{value:.{digits}f}"


def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Left-aligned plain-text table."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)

# ── Argument types ────────────────────────────────────────────────────────

def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def seed_value(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {value}")
    return value


def unit_fraction(text: str) -> float:
    """A float in (0, 1]."""
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1], got {value}")
    return value

# ── JSON ──────────────────────────────────────────────────────────────────

def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def to_json(payload: Any) -> str:
    """Serialize plain data (numpy values allowed); NaN/Inf are rejected."""
    return json.dumps(payload, default=_json_default, indent=2, allow_nan=False)
