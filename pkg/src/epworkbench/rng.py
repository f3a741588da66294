"""Seeded counter-based random streams.

Every consumer derives an independent Philox substream from a master seed and
an integer key path, so results never depend on evaluation order or on how
work is split across processes.
"""
from __future__ import annotations

import os

import numpy as np

SEED_ENV = "EP_WORKBENCH_SEED"


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def resolve_seed(seed: int | None, default: int = 0) -> int:
    """Explicit seed, else ``$EP_WORKBENCH_SEED``, else ``default``."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else default
