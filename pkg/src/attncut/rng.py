"""Small deterministic RNG used for seed sampling.

A 64-bit xorshift generator: portable across platforms and numpy versions,
which keeps mask outputs reproducible byte-for-byte from a recorded seed.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


class Xorshift64:
    """xorshift64 with the classic 13/7/17 triple."""

    def __init__(self, seed: int):
        # state must be nonzero; fold seed 0 onto a fixed odd constant
        self.state = (seed & _MASK64) or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= (x << 13) & _MASK64
        x ^= x >> 7
        x ^= (x << 17) & _MASK64
        self.state = x
        return x

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def sample_without_replacement(self, population: list, k: int) -> list:
        """First k entries of a seeded Fisher-Yates shuffle of population."""
        items = list(population)
        n = len(items)
        k = min(k, n)
        for i in range(k):
            j = i + self.below(n - i)
            items[i], items[j] = items[j], items[i]
        return items[:k]
