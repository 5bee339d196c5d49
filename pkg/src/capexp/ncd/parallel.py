"""Bounded worker pool whose results come back in submission order."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """Two executors: one for node-level tasks, one for scenario solves.

    Node tasks may fan out scenario solves and wait on them; keeping the two
    levels on separate executors means a waiting node task never starves the
    solves it depends on. With ``threads == 1`` everything runs inline.
    """

    def __init__(self, threads: int = 1):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self.threads = threads
        self._outer: ThreadPoolExecutor | None = None
        self._inner: ThreadPoolExecutor | None = None

    def _executor(self, inner: bool) -> ThreadPoolExecutor:
        if inner:
            if self._inner is None:
                self._inner = ThreadPoolExecutor(self.threads, thread_name_prefix="capexp-sp")
            return self._inner
        if self._outer is None:
            self._outer = ThreadPoolExecutor(self.threads, thread_name_prefix="capexp-node")
        return self._outer

    def _map(self, fn: Callable[[T], R], items: Iterable[T], inner: bool) -> list[R]:
        items = list(items)
        if self.threads == 1 or len(items) <= 1:
            return [fn(it) for it in items]
        return list(self._executor(inner).map(fn, items))

    def map_nodes(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        return self._map(fn, items, inner=False)

    def map_scenarios(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        return self._map(fn, items, inner=True)

    def close(self) -> None:
        for ex in (self._outer, self._inner):
            if ex is not None:
                ex.shutdown(wait=True)
        self._outer = self._inner = None

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
