"""Seed derivation and ordered fan-out of independent trajectory jobs."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def trajectory_seed(seed: int, index: int) -> np.random.SeedSequence:
    """RNG stream for trajectory ``index`` of a run with master ``seed``.

    Depends only on the pair, so adding trajectories never perturbs earlier ones.
    """
    return np.random.SeedSequence(int(seed), spawn_key=(int(index),))


def default_workers() -> int:
    return os.cpu_count() or 1


def chunked(n_items: int, n_chunks: int) -> list:
    """Split ``range(n_items)`` into at most ``n_chunks`` contiguous ranges."""
    n_chunks = max(1, min(n_chunks, n_items))
    bounds = np.linspace(0, n_items, n_chunks + 1).round().astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def ordered_map(func, items, workers: int = 1) -> list:
    """``[func(x) for x in items]``, optionally on a process pool.

    Results come back in input order regardless of completion order; ``func``
    and the items must be picklable when ``workers > 1``.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
