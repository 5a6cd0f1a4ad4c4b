"""SplitMix64 generator and per-record seed derivation.

Every random decision in the pipeline goes through this module so that a
corpus can be regenerated bit-for-bit from ``(input, seed)`` in any
language: the generator is a 64-bit counter pushed through a fixed mixer.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *parts: int) -> int:
    """Fold integer ``parts`` into ``seed``; used to give each page, pair or
    example its own independent stream."""
    h = mix64((seed + GOLDEN_GAMMA) & MASK64)
    for part in parts:
        h = mix64(((h ^ (int(part) & MASK64)) + GOLDEN_GAMMA) & MASK64)
    return h


class SplitMix64:
    """Sequential SplitMix64 stream.

    ``random()`` takes the high 53 bits of the next output; ``random_array``
    produces exactly the same values as ``n`` consecutive ``random()`` calls.
    """

    def __init__(self, seed: int = 0):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * _INV_2_53

    def randbelow(self, n: int) -> int:
        """Unbiased integer in ``[0, n)`` by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random_array(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.empty(0, dtype=np.float64)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self.state) + steps * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return (z >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def sample(self, population: int, k: int) -> list[int]:
        """``k`` distinct indices from ``range(population)`` via a partial
        Fisher-Yates shuffle, returned in draw order."""
        if not 0 <= k <= population:
            raise ValueError("sample size out of range")
        pool = list(range(population))
        for i in range(k):
            j = i + self.randbelow(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
