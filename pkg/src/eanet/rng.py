"""Deterministic pseudo-random numbers used everywhere randomness is needed.

The generator is xorshift64* (shifts 12, 25, 27; multiplier
2685821657736338717). It is implemented on plain Python integers so the
stream of draws is byte-identical across platforms, which keeps synthetic
datasets, parameter initialisation, and checkpoints reproducible. Gaussian
draws use the Box-Muller transform; no spare value is cached, so the full
generator state is a single 64-bit word.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_MULTIPLIER = 2685821657736338717
# Substitute state for seed 0 (xorshift state must never be zero).
_ZERO_SEED_STATE = 0x9E3779B97F4A7C15
_INV_2_53 = 2.0 ** -53


class Xorshift64Star:
    """xorshift64* stream seeded from an arbitrary integer."""

    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        state = seed & _MASK64
        if state == 0:
            state = _ZERO_SEED_STATE
        self.state = state

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * _MULTIPLIER) & _MASK64

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def normal_pair(self) -> tuple[float, float]:
        """Two independent standard normals via Box-Muller."""
        u1 = self.uniform()
        if u1 <= 0.0:
            u1 = _INV_2_53
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        return r * math.cos(theta), r * math.sin(theta)

    def normal(self) -> float:
        """One standard normal (the sine branch of the pair is discarded)."""
        return self.normal_pair()[0]

    def below(self, n: int) -> int:
        """Integer in [0, n). Uses a plain modulo; the tiny bias does not
        matter here, determinism does."""
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def getstate(self) -> int:
        return self.state

    def setstate(self, state: int) -> None:
        if not (0 < state <= _MASK64):
            raise ValueError("invalid xorshift64* state")
        self.state = state
