import concurrent.futures
import logging
from collections.abc import Callable, Iterable
from typing import TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Map fn over items, returning results in input order regardless of worker count"""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    max_workers = min(workers, len(items))
    logger.debug(f"Dispatching {len(items)} tasks to {max_workers} workers")
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(fn, items))


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator for chunk `index` derived from the run seed by a fixed spawn key"""
    assert index >= 0, "substream index must be non-negative"
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


SUBSTREAM_SCHEME = "numpy SeedSequence(seed, spawn_key=(chunk_index,)) -> default_rng (PCG64)"
