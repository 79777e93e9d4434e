"""Per-trial random streams.

Every trial draws from its own Philox (counter-based) generator keyed by
``(master_seed, trial_index[, substream])``. The stream of a trial never
depends on how many trials ran before it or on which worker ran it, so
serial and threaded runs produce identical numbers.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def trial_rng(master_seed: int, trial: int = 0, substream: int = 0) -> np.random.Generator:
    """Generator for one trial, independent of every other ``(trial, substream)``."""
    if master_seed < 0 or trial < 0 or substream < 0:
        raise ValueError("seeds and indices must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed) & MASK64, spawn_key=(int(trial), int(substream)))
    return np.random.Generator(np.random.Philox(ss))


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator, an int seed, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.default_rng()
    return trial_rng(int(seed))
