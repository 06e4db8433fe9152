"""Reproducible per-trajectory random streams.

Each trajectory gets its own counter-based Philox stream keyed by
(master seed, trajectory index).  Streams are therefore independent of
how trajectories are partitioned across workers, which makes ensemble
results invariant under the worker count.
"""
from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox


def trajectory_rng(master_seed: int, index: int) -> Generator:
    """Stream for trajectory `index` under `master_seed`."""
    if master_seed < 0 or index < 0:
        raise ValueError("seed and trajectory index must be non-negative")
    key = np.array([np.uint64(master_seed), np.uint64(index)], dtype=np.uint64)
    return Generator(Philox(key=key))


def scenario_rng(master_seed: int, purpose: int) -> Generator:
    """Stream for non-trajectory draws (scans, shuffles); purpose >= 2**32
    keeps these disjoint from trajectory indices in practice."""
    return trajectory_rng(master_seed, (1 << 48) + purpose)
