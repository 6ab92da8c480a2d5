"""Portable xoshiro256** generator seeded through splitmix64.

Subclasses :class:`random.Random`, so ``uniform``, ``gauss`` and friends
come from the standard library and the stream is identical on every
platform and Python build.
"""

import random

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256(random.Random):
    def __init__(self, seed: int = 0):
        self._s = [0, 0, 0, 0]
        super().__init__(seed)

    def seed(self, a=0, version=2):
        sm = int(a) & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s
        self.gauss_next = None

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def getrandbits(self, k: int) -> int:
        if k < 0:
            raise ValueError("number of bits must be non-negative")
        out, filled = 0, 0
        while filled < k:
            out |= self.next_u64() << filled
            filled += 64
        return out & ((1 << k) - 1)

    def getstate(self):
        return tuple(self._s), self.gauss_next

    def setstate(self, state):
        s, self.gauss_next = state
        self._s = list(s)
