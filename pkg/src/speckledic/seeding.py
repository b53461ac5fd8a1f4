"""Deterministic seed derivation for hierarchical experiments.

Every randomized stage takes a single integer seed.  Sub-seeds (per pair,
per trial, per purpose) are derived through SeedSequence spawn keys so that
each one is a pure function of (master seed, path) and unrelated seeds give
statistically independent streams.
"""

from __future__ import annotations

import numpy as np


def derive_seed(master_seed: int, *path: int) -> int:
    """Collapse (master_seed, path) into a single 64-bit seed.

    The spawn-key construction guarantees the same (master_seed, path)
    always yields the same seed, on any platform.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def rng_from(master_seed: int, *path: int) -> np.random.Generator:
    """Generator seeded from a derived sub-seed."""
    return np.random.default_rng(
        np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    )
