"""Deterministic random streams and replicate-parallel execution.

Replicates are grouped into fixed-size chunks. Chunk ``c`` always draws
from ``SeedSequence(seed, spawn_key=(c,))`` and results are reassembled in
chunk order, so outputs depend on the seed alone and never on the number
of worker threads.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

#: Replicates per random stream.
CHUNK_SIZE = 1000


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator number ``index`` derived from ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def chunk_sizes(reps: int, chunk: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(reps, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[int, np.random.Generator], T],
    reps: int,
    seed: int,
    threads: int = 1,
    chunk: int = CHUNK_SIZE,
) -> list[T]:
    """Run ``fn(size, rng)`` for every chunk of ``reps`` replicates.

    Results come back in chunk order whatever ``threads`` is.
    """
    sizes = chunk_sizes(reps, chunk)
    jobs = [(size, stream(seed, i)) for i, size in enumerate(sizes)]
    if threads <= 1 or len(jobs) <= 1:
        return [fn(size, rng) for size, rng in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
