"""Deterministic path-parallel execution.

Workers are pure functions of the path index (noise is keyed by
(seed, path_index)), results land in an index-ordered list, and every
reduction downstream runs over that ordered list, so aggregates do not
depend on the thread count or scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

__all__ = ["map_paths"]


def map_paths(worker, n_paths: int, threads: int = 1) -> list:
    threads = max(1, int(threads))
    if threads == 1 or n_paths < 4:
        return [worker(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(worker, range(n_paths)))
