"""Seed handling: one 64-bit master seed, documented stream splitting.

Every source of randomness in the package is derived from a single u64 seed.
Python-level code draws from ``numpy.random.Generator(Philox)`` instances,
the numba kernels run xoshiro256** states; both are keyed by
``(seed, stream)`` through splitmix64 so that distinct streams are
statistically independent and runs are reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def splitmix64(x: int) -> int:
    """One splitmix64 step; used to derive stream keys from the master seed."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int) -> int:
    """Derive the u64 key of a named stream from the master seed."""
    return splitmix64(splitmix64(seed & 0xFFFFFFFFFFFFFFFF) ^ (stream & 0xFFFFFFFFFFFFFFFF))


def xoshiro_state(seed: int, stream: int = 0) -> np.ndarray:
    """Initial xoshiro256** state (4 x u64) for a kernel-side stream."""
    key = stream_key(seed, stream)
    state = np.empty(4, dtype=np.uint64)
    for i in range(4):
        key = splitmix64(key)
        state[i] = key
    return state


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    """Python-side counter-based generator for the given stream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, stream)))
