from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Applies ``fn`` to every item and returns results in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def split_chunks(count: int, chunks: int) -> List[Sequence[int]]:
    """Splits ``range(count)`` into at most ``chunks`` contiguous, non-empty ranges."""
    chunks = max(1, min(chunks, count))
    bounds = np.linspace(0, count, chunks + 1).astype(int)
    return [range(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def chunk_generators(seed: int, chunks: int) -> List[np.random.Generator]:
    """One counter-based stream per chunk, all derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(chunks)
    return [np.random.Generator(np.random.Philox(child)) for child in children]
