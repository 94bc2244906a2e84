"""Thread-pool helper with order-preserving results.

Work is dispatched to a pool but results always come back in input
order, so accumulations that follow are independent of scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .errors import DataError


def parallel_map(fn, items, threads: int = 1) -> list:
    """Apply ``fn`` to each item, optionally across ``threads`` workers."""
    if int(threads) != threads or threads < 1:
        raise DataError(f"threads must be an integer >= 1, got {threads}")
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))
