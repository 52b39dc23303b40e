"""Seeded, splittable random streams.

A stream is identified by ``(seed, *key)`` where key is a tuple of
non-negative integers (task index, replica index, ...). Streams never depend
on which worker runs the task.
"""
import numpy as np


def derive_seed(seed, *key):
    """64-bit seed of the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(seed, *key):
    """Independent ``np.random.Generator`` for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def parallel_map(fn, items, threads=1):
    """Ordered map over ``items``; results never depend on ``threads``."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, items))
