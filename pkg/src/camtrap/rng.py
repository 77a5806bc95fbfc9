"""Counter-based SplitMix64 stream used wherever bit-exact reproducibility matters.

Output ``i`` (1-based) of a stream seeded with ``s`` is ``mix(s + i * GAMMA)``
where ``mix`` is the SplitMix64 finalizer, so blocks of draws can be produced
with vectorized uint64 arithmetic and still agree with a scalar implementation
in any language.

Conventions, fixed so independent implementations agree:

* uniform double: ``(x >> 11) * 2**-53``
* bounded integer in ``[0, n)``: ``x % n``
* Fisher-Yates: for ``i = n-1 .. 1`` draw ``j = x % (i + 1)`` and swap ``a[i], a[j]``
* child seeds: ``mix(seed ^ fnv1a64(tag) + GAMMA)``
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, tag: str) -> int:
    """Child seed for an independent sub-stream named ``tag``."""
    return mix64(((seed & MASK64) ^ fnv1a64(tag.encode("utf-8"))) + GAMMA)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        """The next ``n`` raw outputs as a uint64 array."""
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(GAMMA)
            return _mix_array(z)

    def uniform(self, n: int) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def bernoulli(self, n: int, p: float) -> np.ndarray:
        return self.uniform(n) < p

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle in place (and returned)."""
        n = len(items)
        if n < 2:
            return items
        draws = self.next_u64(n - 1).tolist()
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = draws[k] % (i + 1)
            items[i], items[j] = items[j], items[i]
        return items
