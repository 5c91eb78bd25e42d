"""Seed derivation.

Every random stream in the package is drawn from ``rng(seed, tag, ...)``.
The tag names the consumer (``"split"``, ``"matrec-init"``, ...) and any
integers after it (epoch index) pick a sub-stream, so no two components
share draws from the single user-facing seed.
"""

import zlib

import numpy as np


def _tag_word(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag)


def rng(seed: int, *tags) -> np.random.Generator:
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    entropy = [seed & 0xFFFFFFFF, seed >> 32] + [_tag_word(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
