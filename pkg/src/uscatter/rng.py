"""Reproducible random streams from a single 64-bit seed (splitmix64).

Every configurable source of randomness in the experiment runner draws from
this generator so that runs reproduce bit-for-bit from the seed alone, in
any implementation of the same algorithm:

    state <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z <- state
    z <- (z xor (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2^64
    z <- (z xor (z >> 27)) * 0x94D049BB133111EB mod 2^64
    output: z xor (z >> 31)

Unit doubles take the top 53 bits: (output >> 11) * 2**-53 in [0, 1).
"""
from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """Deterministic 64-bit stream; the sole RNG behind configured experiments."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return (z ^ (z >> 31)) & _MASK

    def next_unit(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def units(self, count: int) -> list[float]:
        return [self.next_unit() for _ in range(count)]
