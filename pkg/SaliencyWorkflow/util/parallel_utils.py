"""
Ordered fan-out of independent work items onto worker threads.

Results always come back in input order, so any reduction over them is
independent of the thread count.
"""

from typing import Callable, List, Sequence, TypeVar

import anyio
import anyio.to_thread

ItemT = TypeVar('ItemT')
ResultT = TypeVar('ResultT')


async def _gather_in_threads(fn: Callable[[ItemT], ResultT], items: Sequence[ItemT], threads: int) -> List[ResultT]:
    limiter = anyio.CapacityLimiter(threads)
    results: List[ResultT] = [None] * len(items)

    async def run_one(index: int, item: ItemT):
        results[index] = await anyio.to_thread.run_sync(fn, item, limiter=limiter)

    async with anyio.create_task_group() as tg:
        for index, item in enumerate(items):
            tg.start_soon(run_one, index, item)
    return results


def ordered_map(fn: Callable[[ItemT], ResultT], items: Sequence[ItemT], threads: int = 1) -> List[ResultT]:
    """[fn(item) for item in items], computed on up to `threads` worker threads."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return anyio.run(_gather_in_threads, fn, items, threads)
