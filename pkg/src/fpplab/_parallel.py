"""Thread pool helper with canonical-order results."""

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "FPPLAB_THREADS"


def resolve_threads(threads=None):
    """Explicit value wins, then the environment variable, then 1."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    threads = int(threads)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def ordered_map(fn, items, threads=1):
    """``[fn(x) for x in items]``, possibly on a pool; output order never depends on scheduling."""
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
