"""Portable deterministic randomness for prompt shuffling and mocks.

The generator is splitmix64 (Steele, Lea & Flood 2014): a 64-bit counter
advanced by the golden-gamma constant and scrambled by two xor-shift
multiplies. It is implemented here in plain integer arithmetic so the same
seed yields the same stream on every platform and Python version, which the
stdlib does not promise across releases.
"""

from __future__ import annotations

from typing import MutableSequence, TypeVar

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, salt: int) -> int:
    """Derive a child seed from (seed, salt), e.g. one stream per sample."""
    return _mix((seed + salt * _GAMMA) & _MASK64)


class SplitMix64:
    """Deterministic 64-bit generator with shuffle and ranged draws."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix(self._state)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange bound must be positive")
        # Reject draws from the final partial block so every residue is
        # equally likely.
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            value = self.next_uint64()
            if value < limit:
                return value % n

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in the closed interval [low, high]."""
        if high < low:
            raise ValueError("empty interval")
        return low + self.randrange(high - low + 1)

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates shuffle, iterating from the end down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]
