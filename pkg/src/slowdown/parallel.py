"""Thread-pool execution of independent chunks with ordered merging.

The compiled kernels release the GIL, so threads give real parallelism.  The
worker count comes from ``SLOWDOWN_WORKERS`` and never changes results: chunks
are fixed by the caller and merged in chunk order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_WORKERS = "SLOWDOWN_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(ENV_WORKERS, "").strip()
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{ENV_WORKERS} must be >= 1, got {raw!r}")
        return n
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def map_ordered(fn, tasks, workers: int | None = None) -> list:
    """``[fn(t) for t in tasks]`` evaluated on a thread pool."""
    tasks = list(tasks)
    workers = worker_count() if workers is None else workers
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
