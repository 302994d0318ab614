"""
Worker pool
Order-preserving parallel map for independent experiment items
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """
    Apply fn to every item, results in submission order

    Args:
        fn: Function of one item; must not share mutable state with other calls
        items: Work items
        jobs: Worker count (1 runs inline)

    Returns:
        List: fn(item) for every item
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = min(jobs, len(items))
    logger.debug("dispatching %d items to %d workers", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
