"""Counter-based random streams keyed by (scene, seed, index).

Streams use numpy's Philox generator, whose output is fixed by its 128-bit key
and does not depend on platform or thread scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def name_hash(name: str) -> int:
    """Stable 64-bit hash of a string (blake2b, little endian)."""
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "little")


def stream(seed: int, index: int = 0, name: str = "") -> np.random.Generator:
    """Independent generator for ``(name, seed, index)``.

    The first key word is ``hash(name) ^ seed``; the second is ``index``.
    """
    k0 = (name_hash(name) ^ (int(seed) & MASK64)) & MASK64
    k1 = int(index) & MASK64
    return np.random.Generator(np.random.Philox(key=np.array([k0, k1], dtype=np.uint64)))
