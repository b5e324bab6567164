"""SplitMix64 generator for reproducible initial-data presets."""

import math

_MASK = (1 << 64) - 1

__all__ = ["SplitMix64"]


class SplitMix64:
    """Plain 64-bit SplitMix generator.

    Integer arithmetic only, so a seed gives the same stream in any
    language that implements the same recurrence.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed <= _MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.state = seed

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self):
        """Double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def symmetric(self, n):
        """``n`` doubles uniform in [-1, 1)."""
        return [2.0 * self.uniform() - 1.0 for _ in range(n)]

    def unit_vector(self):
        """Uniform direction on the unit sphere (rejection sampling in the cube)."""
        while True:
            v = self.symmetric(3)
            r2 = sum(x * x for x in v)
            if 1e-12 < r2 <= 1.0:
                r = math.sqrt(r2)
                return [x / r for x in v]
