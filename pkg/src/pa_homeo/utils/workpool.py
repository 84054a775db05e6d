"""順序を保つ作業プール"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from loguru import logger

A = TypeVar("A")
R = TypeVar("R")


class WorkPool:
    """ThreadPoolExecutor の薄いラッパー。workers = 1 ならその場で実行する"""

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))

    def map(self, fn: Callable[[A], R], items: Iterable[A]) -> List[R]:
        """入力順に結果を返す (完了順によらず決定的)"""
        work = list(items)
        if self.workers == 1 or len(work) <= 1:
            return [fn(item) for item in work]
        logger.debug(f"Dispatching {len(work)} tasks to {self.workers} workers")
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, work))
