"""Seedable, portable random generator for mission noise.

Bit-stream contract (so traces replay byte-identically anywhere):

* State evolves by SplitMix64: s += 0x9E3779B97F4A7C15; the output mixes
  z = s; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9; z = (z ^ z>>27) *
  0x94D049BB133111EB; z ^= z>>31 (all mod 2^64).
* uniform() maps the top 53 bits to (0, 1]: ((z >> 11) + 1) * 2^-53.
* Normals come from Box-Muller on consecutive uniforms u1, u2:
  r = sqrt(-2 ln u1); the pair is (r cos(2 pi u2), r sin(2 pi u2)), returned
  in that order (the second value is cached).

Everything is integer arithmetic plus deterministic libm calls, so the
stream is reproducible for a fixed seed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PortableRng"]

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class PortableRng:
    def __init__(self, seed: int):
        self._state = int(seed) & _MASK
        self._spare: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform draw in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def normal(self) -> float:
        if self._spare is not None:
            value, self._spare = self._spare, None
            return value
        u1 = self.uniform()
        u2 = self.uniform()
        r = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        self._spare = float(r * np.sin(angle))
        return float(r * np.cos(angle))

    def normals(self, count: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(count)])
