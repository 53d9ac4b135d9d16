"""
Order-preserving thread pool used by the batch stages
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from services.errors import InvalidParam
from services.logger import get_run_id, wrap_worker

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """map() over a pool; results keep input order so outputs do not depend on thread count"""
    if threads < 1:
        raise InvalidParam(f"threads must be >= 1, got {threads}")
    items = list(items)
    if threads == 1 or len(items) < 2:
        return [fn(item) for item in items]
    worker = wrap_worker(fn, get_run_id())
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, items))
