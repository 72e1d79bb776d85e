"""Worker pool for independent Monte Carlo trials."""

import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from entroscale.core.config import get_settings

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Number of worker threads (ENTROSCALE_THREADS, else CPU count)."""
    return get_settings().threads or os.cpu_count() or 1


def map_ordered(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """
    Apply `fn` to every item, possibly in parallel.

    Results come back in input order whatever the schedule, so reductions
    over them are schedule-independent.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
