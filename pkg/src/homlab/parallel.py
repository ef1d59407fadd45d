"""Thread-count control with order-stable reductions."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numba

_THREADS = 1


def set_threads(n: int | None) -> int:
    """Set the worker count used by ``map_ordered`` and the compiled loops."""
    global _THREADS
    if n is None:
        n = int(os.environ.get("LAB_THREADS", "1"))
    n = max(1, int(n))
    _THREADS = n
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def threads() -> int:
    return _THREADS


def map_ordered(fn, items):
    """``[fn(x) for x in items]`` evaluated on the worker pool, order preserved."""
    items = list(items)
    if _THREADS == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=_THREADS) as pool:
        return list(pool.map(fn, items))


def ordered_sum(arrays):
    """Left-to-right sum so the rounding pattern never depends on scheduling."""
    total = None
    for a in arrays:
        total = a.copy() if total is None else total + a
    return total
