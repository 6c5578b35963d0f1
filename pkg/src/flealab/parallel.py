"""Order-preserving process-pool map used by every scan."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def pmap(func, items, workers: int = 1) -> list:
    """``[func(x) for x in items]``, optionally spread over processes.

    Results come back in input order, so output never depends on scheduling.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))
