# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

import os
import sys
from typing import Callable, List, Optional, Sequence, TypeVar

if sys.version_info < (3, 11):  # pragma: no cover
    from exceptiongroup import ExceptionGroup

import anyio
from anyio import CapacityLimiter

from coreason_arcfdr.utils.logger import logger

WORKERS_ENV = "ARCFDR_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    """Returns the worker count from `ARCFDR_WORKERS`, or 1 when unset or invalid."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring invalid {WORKERS_ENV}={raw!r}; using 1 worker")
        return 1


async def map_nodes_async(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Runs `func` over `items` in worker threads, at most `workers` at a time.

    Results are stored by input position, so the returned list does not depend on
    completion order.
    """
    results: List[Optional[R]] = [None] * len(items)
    limiter = CapacityLimiter(max(1, workers))

    async def _run(position: int, item: T) -> None:
        results[position] = await anyio.to_thread.run_sync(func, item, limiter=limiter)

    async with anyio.create_task_group() as tg:
        for position, item in enumerate(items):
            tg.start_soon(_run, position, item)

    return results  # type: ignore[return-value]


def map_nodes(func: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Applies `func` to every item, sequentially or through worker threads.

    Args:
        func: A pure function of one item.
        items: The work items (typically node indices or replicate indices).
        workers: Maximum concurrent threads; None reads `ARCFDR_WORKERS`.

    Returns:
        The results in the same order as `items`.

    Raises:
        Exception: The first exception raised by `func`, unwrapped from the task group.
    """
    n_workers = default_workers() if workers is None else workers
    if n_workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    try:
        return anyio.run(map_nodes_async, func, items, n_workers)
    except ExceptionGroup as group:
        first = group.exceptions[0]
        while isinstance(first, ExceptionGroup):
            first = first.exceptions[0]
        raise first from group
