"""Chunked sample generation with one random stream per chunk.

Chunk boundaries depend only on ``total`` and ``chunk_size``, never on the
number of workers, so merged results are identical for any ``workers``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, TypeVar

from mlwalk.rng import stream

T = TypeVar("T")

DEFAULT_CHUNK = 1 << 16


def chunk_sizes(total: int, chunk_size: int = DEFAULT_CHUNK) -> list[int]:
    if total < 0:
        raise ValueError("total must be non-negative")
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    full, rest = divmod(total, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def _run(job):
    func, count, seed, tag, index = job
    return func(count, stream(seed, tag, index))


def map_chunks(
    func: Callable[..., T],
    total: int,
    seed: int,
    tag: str,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> list[T]:
    """Call ``func(count, rng)`` once per chunk and return results in chunk order.

    ``func`` must be picklable (module-level function or ``functools.partial``)
    when ``workers > 1``.
    """
    jobs = [(func, c, seed, tag, i) for i, c in enumerate(chunk_sizes(total, chunk_size))]
    if workers <= 1 or len(jobs) <= 1:
        return [_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, jobs))
