"""
Work pool for independent simulation jobs

Sweep points, sessions, per-Bob decoding and optimizer restarts are
submitted here. Results always come back in submission order.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from app.config import settings
from app.utils.logging import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def spawn_generators(seed: int, count: int) -> List[np.random.Generator]:
    """Derive ``count`` independent generators from one seed"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def spawn_seeds(seed: int, count: int) -> List[int]:
    """Derive ``count`` independent 63-bit integer seeds from one seed"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for child in children]


def run_jobs(
    func: Callable[[T], R],
    items: Sequence[T] | Iterable[T],
    max_workers: Optional[int] = None,
) -> List[R]:
    """
    Run ``func`` over ``items`` in a thread pool

    numpy and scipy release the GIL in their kernels, so threads are
    enough for the numeric jobs submitted here. A pool size of 1 runs
    inline.

    Args:
        func: Job function, must not mutate shared state
        items: Job inputs
        max_workers: Pool size (defaults to settings.max_workers)

    Returns:
        Results in the order of ``items``
    """
    items = list(items)
    workers = max_workers if max_workers is not None else settings.max_workers
    workers = max(1, min(workers, len(items) or 1))

    if workers == 1:
        return [func(item) for item in items]

    logger.debug("Dispatching jobs", jobs=len(items), workers=workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(func, item) for item in items]
        return [future.result() for future in futures]
