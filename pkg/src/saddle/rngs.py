"""Deterministic random-stream derivation.

Every stochastic component draws from its own stream keyed by a tag plus the
experiment seed (and agent/round ids where relevant), so results never depend
on call order or on which agents run concurrently.
"""

from __future__ import annotations

import numpy as np

TAG_DATA = 1
TAG_PARTITION = 2
TAG_INIT = 3
TAG_BATCH = 4
TAG_COMPRESS = 5
TAG_METRICS = 6

__all__ = [
    "stream",
    "TAG_DATA",
    "TAG_PARTITION",
    "TAG_INIT",
    "TAG_BATCH",
    "TAG_COMPRESS",
    "TAG_METRICS",
]


def stream(*key: int) -> np.random.Generator:
    """Generator for a stream identified by a tuple of non-negative ints."""
    parts = tuple(int(k) for k in key)
    if any(k < 0 for k in parts):
        raise ValueError(f"stream key must be non-negative, got {parts}")
    return np.random.default_rng(np.random.SeedSequence(parts))
