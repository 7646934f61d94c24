"""Ordered per-item fan-out over worker processes."""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from utils.runinfo import default_jobs

logger = logging.getLogger('avse')

T = TypeVar('T')
R = TypeVar('R')


def parallel_map(fn: Callable[[T], R], items: Iterable[T], jobs: Optional[int] = None) -> List[R]:
    """map(fn, items) with results in input order; runs inline when jobs <= 1."""
    items = list(items)
    jobs = default_jobs() if jobs is None else jobs
    jobs = max(1, min(jobs, len(items)))
    if jobs == 1:
        return [fn(item) for item in items]
    logger.debug(f"PARALLEL | {len(items)} items over {jobs} workers")
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
