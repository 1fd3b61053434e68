"""Seeded xoshiro256** PRNG.

Implemented explicitly (rather than via numpy's Generator) so that random
streams are reproducible bit-for-bit across platforms and implementations:
state seeding uses splitmix64, doubles take the top 53 bits of each output,
and normals come from the Box-Muller transform with a cached spare.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** generator with convenience samplers."""

    def __init__(self, seed):
        state = int(seed) & _MASK
        self.s = []
        for _ in range(4):
            state, word = _splitmix64(state)
            self.s.append(word)
        self._spare_normal = None

    def next_u64(self):
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self):
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, low, high):
        """Uniform integer in [low, high] inclusive."""
        if high < low:
            raise ValueError(f"randint: empty range [{low}, {high}]")
        span = high - low + 1
        return low + int(self.random() * span) % span

    def normal(self, std=1.0, mean=0.0):
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return mean + std * z
        while True:
            u1 = self.random()
            if u1 > 0.0:
                break
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        z0 = r * math.cos(2.0 * math.pi * u2)
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return mean + std * z0

    def normal_array(self, shape, std=1.0):
        size = int(np.prod(shape))
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = self.normal(std)
        return out.reshape(shape)

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        if not items:
            raise ValueError("choice from empty sequence")
        return items[self.randint(0, len(items) - 1)]

    def spawn(self):
        """Derive an independent child generator from this stream."""
        return Xoshiro256(self.next_u64())
