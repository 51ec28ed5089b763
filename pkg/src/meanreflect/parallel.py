"""Worker-count resolution and deterministic thread helpers.

Parallelism never changes results: particle work is chunked over disjoint
index ranges whose values depend only on (seed, particle, step), and
reductions are always performed by a single numpy call over the full array.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

#: Below this many items, chunked threading costs more than it saves.
MIN_CHUNK_ITEMS = 16384


def worker_count() -> int:
    """Worker cap from ``MEANREFLECT_THREADS``, defaulting to the host CPU count."""
    raw = os.environ.get("MEANREFLECT_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValueError(
                f"MEANREFLECT_THREADS must be a positive integer, got {raw!r}"
            ) from exc
        if n < 1:
            raise ValueError(f"MEANREFLECT_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def chunk_ranges(n_items: int, n_chunks: int) -> list[tuple[int, int]]:
    """Split ``range(n_items)`` into at most ``n_chunks`` contiguous ranges."""
    n_chunks = max(1, min(n_chunks, n_items))
    step = -(-n_items // n_chunks)
    return [(lo, min(lo + step, n_items)) for lo in range(0, n_items, step)]


def run_chunked(
    work: Callable[[int, int], None], n_items: int, threads: int | None = None
) -> None:
    """Run ``work(lo, hi)`` over disjoint chunks of ``range(n_items)``.

    ``work`` must write only to slice ``[lo:hi]`` of its outputs, so the
    result is independent of scheduling.
    """
    threads = worker_count() if threads is None else threads
    if threads <= 1 or n_items < MIN_CHUNK_ITEMS:
        work(0, n_items)
        return
    ranges = chunk_ranges(n_items, threads)
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        futures = [pool.submit(work, lo, hi) for lo, hi in ranges]
        for fut in futures:
            fut.result()


def map_ordered(
    fn: Callable[[T], R], items: Sequence[T], threads: int | None = None
) -> list[R]:
    """Apply ``fn`` to each item, preserving input order in the results."""
    threads = worker_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
