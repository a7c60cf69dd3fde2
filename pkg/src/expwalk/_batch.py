"""Seed-deterministic batch execution.

A master seed drawn once from the caller's generator is expanded with
:class:`numpy.random.SeedSequence` into one child stream per batch index.
Batch sizes never depend on the worker count, and results are gathered in
batch order, so output is identical for any pool size.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from itertools import accumulate
from typing import Callable, Sequence

import numpy as np
from numpy.random import Generator

DEFAULT_BATCH = 8192


def master_seed(rng: Generator | int | None) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    if rng is None:
        rng = np.random.default_rng()
    return int(rng.integers(0, 2**63 - 1))


def plan(total: int, batch: int = DEFAULT_BATCH) -> list[int]:
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    return sizes


def batch_seeds(master: int, n_batches: int, tag: int = 0) -> list[int]:
    ss = np.random.SeedSequence([master, tag])
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in ss.spawn(n_batches)]


def run(fn: Callable[..., object], total: int, master: int, workers: int = 1,
        batch: int = DEFAULT_BATCH, tag: int = 0, indexed: bool = False) -> list:
    """Call ``fn(count, seed)`` for every batch; results in batch order.

    With ``indexed`` the call is ``fn(first, count, seed)`` where ``first``
    is the global index of the batch's first draw.
    """
    sizes = plan(total, batch)
    seeds = batch_seeds(master, len(sizes), tag)
    firsts = [0, *accumulate(sizes)][:-1]
    args = (firsts, sizes, seeds) if indexed else (sizes, seeds)
    if workers <= 1 or len(sizes) <= 1:
        return [fn(*a) for a in zip(*args)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *args))


def concat(parts: Sequence) -> np.ndarray:
    return np.concatenate([np.asarray(p) for p in parts], axis=0)
