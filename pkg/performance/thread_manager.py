"""
thread_manager.py
-----------------
Worker pool for independent raster tiles.

Tiles are scheduled in any order; results always come back in submission
order, so compositing and gradient accumulation stay deterministic.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Optional

from loguru import logger

from utils.settings import get_settings


class TileWorkerPool:
    """
    Fixed-size thread pool.

    map(fn, items)   run fn on every item, results in item order
    close()          release the worker threads
    """

    def __init__(self, threads: Optional[int] = None) -> None:
        self._threads  = max(1, threads if threads is not None else get_settings().threads)
        self._executor: Optional[ThreadPoolExecutor] = None
        self._lock     = threading.Lock()

    @property
    def threads(self) -> int:
        return self._threads

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> list[Any]:
        items = list(items)
        if self._threads == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with self._lock:
            if self._executor is None:
                self._executor = ThreadPoolExecutor(max_workers=self._threads, thread_name_prefix="tile")
                logger.debug("[RENDER] tile pool started with {} threads", self._threads)
        return list(self._executor.map(fn, items))

    def close(self) -> None:
        with self._lock:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None

    def __enter__(self) -> TileWorkerPool:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


_shared: Optional[TileWorkerPool] = None
_shared_lock = threading.Lock()


def shared_pool() -> TileWorkerPool:
    """Process-wide pool sized by LHM_THREADS."""
    global _shared
    with _shared_lock:
        if _shared is None:
            _shared = TileWorkerPool()
        return _shared
