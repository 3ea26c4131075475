"""Replicate scheduling.

Replicates are independent and each owns its generator, so they can run on
a thread pool (the compiled engines release the GIL).  Results always come
back in replicate order, which keeps every aggregate independent of the
thread count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "UDEP_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_replicates(func, reps, threads=None):
    """``[func(r) for r in range(reps)]``, possibly computed concurrently."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or reps <= 1:
        return [func(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(reps)))
