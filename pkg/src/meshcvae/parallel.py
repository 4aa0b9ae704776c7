"""Fixed-partition thread-pool maps.

Work over ``range(n)`` is always cut into the same ``chunk``-sized slices no
matter how many threads run them, and every slice writes to its own output
rows. Results are therefore bitwise identical for any thread count. numpy
releases the GIL inside BLAS calls and most ufunc loops, which is where the
per-chunk time goes.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable

from threadpoolctl import threadpool_limits

DEFAULT_CHUNK = 2048


def resolve_threads(threads) -> int:
    if threads in (None, "all"):
        return os.cpu_count() or 1
    t = int(threads)
    if t < 1:
        raise ValueError("threads must be >= 1")
    return t


def chunks(n: int, chunk: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def chunked_map(fn: Callable[[int, int], object], n: int, threads: int = 1,
                chunk: int = DEFAULT_CHUNK) -> list:
    """Call ``fn(lo, hi)`` for each fixed slice of ``range(n)``; results in slice order."""
    parts = chunks(n, chunk)
    if threads <= 1 or len(parts) <= 1:
        return [fn(lo, hi) for lo, hi in parts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in parts]
        return [f.result() for f in futures]


@contextmanager
def single_threaded_blas():
    """Pin BLAS to one thread so the pool is the only source of parallelism."""
    with threadpool_limits(limits=1, user_api="blas"):
        yield
