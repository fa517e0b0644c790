"""Portable deterministic random generator.

Counter-mode splitmix64: output i is mix(seed_state + (i+1) * GAMMA) with the
standard splitmix64 mixing constants, so a fixed seed yields the same stream
on every platform and at any level of internal parallelism. numpy uint64
arithmetic wraps mod 2**64, matching the reference definition.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = float(2.0 ** -53)


def _mix(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


class DeterministicRng:
    """Seeded stream of uniform numbers, stable across runs and platforms."""

    def __init__(self, seed: int):
        self._state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit outputs."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return _mix(self._state + idx * _GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """n float64 samples in [0, 1), using the top 53 bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n int64 samples uniform on [0, bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        out = np.floor(self.uniform(n) * bound).astype(np.int64)
        # floor(u * bound) can only hit bound if u rounds up to 1.0, which
        # cannot happen with 53-bit uniforms, but clip defensively.
        return np.minimum(out, bound - 1)
