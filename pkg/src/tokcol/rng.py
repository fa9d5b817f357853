"""Seed plumbing: every random draw in the package comes from one 64-bit seed.

Streams are derived with numpy's ``SeedSequence`` spawn keys feeding a
Philox (counter-based) bit generator, so a stream depends only on
``(seed, purpose, index...)`` and never on evaluation order.
"""
from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part) & 0xFFFFFFFF


def stream(seed: int, *purpose) -> np.random.Generator:
    """Independent generator for ``purpose`` (strings or small ints)."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(_key(p) for p in purpose))
    return np.random.Generator(np.random.Philox(ss))


def randbits(gen: np.random.Generator, nbits: int) -> int:
    """Uniform integer in ``[0, 2**nbits)`` of arbitrary width."""
    if nbits <= 0:
        return 0
    words = gen.integers(0, 1 << 32, size=(nbits + 31) // 32, dtype=np.uint64)
    value = 0
    for w in words:
        value = (value << 32) | int(w)
    return value & ((1 << nbits) - 1)


def randbelow(gen: np.random.Generator, bound: int) -> int:
    """Uniform integer in ``[0, bound)`` for arbitrarily large ``bound``."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    if bound <= (1 << 62):
        return int(gen.integers(0, bound))
    nbits = bound.bit_length()
    while True:
        v = randbits(gen, nbits)
        if v < bound:
            return v


def derive_seed(seed: int, *purpose) -> int:
    """A fresh 64-bit seed for a sub-experiment."""
    return int(stream(seed, *purpose).integers(0, 1 << 63)) 
