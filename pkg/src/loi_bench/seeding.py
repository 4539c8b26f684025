"""Hierarchical seed derivation.

Every random quantity in a run is drawn from a seed derived from the root
seed plus a path of keys, e.g. ``derive_seed(root, "train", "small", 3)``.
Keys may be ints or strings; strings are hashed to a stable 32-bit value.
The derivation goes through ``numpy.random.SeedSequence`` spawn keys, so any
sub-computation can be re-run in isolation.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError("seed keys must be non-negative")
    return int(part)


def derive_seed(root: int, *path: int | str) -> int:
    """Return a 64-bit seed for ``path`` under ``root``."""
    seq = np.random.SeedSequence(int(root) & MASK64, spawn_key=tuple(_key(p) for p in path))
    lo, hi = seq.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def derive_rng(root: int, *path: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *path))
