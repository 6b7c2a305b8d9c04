"""Counter-based seed derivation.

A (master seed, key path) pair maps to an independent stream through
``numpy.random.SeedSequence`` spawn keys, so adding a new consumer (a policy,
a sweep point) never shifts the streams of existing ones.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def derive_seed(master: int, *path) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_key(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_rng(master: int, *path) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *path))
