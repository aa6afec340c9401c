"""Ordered parallel map over scenes, capped by ``UNIINST_THREADS``."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "UNIINST_THREADS"


class ThreadConfigError(ValueError):
    pass


def thread_count(default: int = 0) -> int:
    """Worker count from the environment; 0 (or unset) means one per CPU."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw) if raw.strip() else default
    except ValueError:
        raise ThreadConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ThreadConfigError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> List[R]:
    """``[fn(x) for x in items]``, possibly on a thread pool; output order is input order."""
    items = list(items)
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
