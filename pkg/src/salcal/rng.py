"""Deterministic SplitMix64 generator used everywhere randomness is needed.

The generator is fully specified by its constants, so datasets, weight
initializations and shuffle orders are reproducible bit-for-bit from a
64-bit seed alone:

    state <- state + 0x9E3779B97F4A7C15          (mod 2^64)
    z = state
    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9       (mod 2^64)
    z ^= z >> 27;  z *= 0x94D049BB133111EB       (mod 2^64)
    z ^= z >> 31

Uniform floats take the top 53 bits: u = (z >> 11) * 2**-53, in [0, 1).
Gaussian draws use Box-Muller on consecutive uniform pairs (u1, u2):

    r  = sqrt(-2 * ln(1 - u1))       # 1 - u1 in (0, 1], so ln is defined
    n1 = r * cos(2*pi*u2)
    n2 = r * sin(2*pi*u2)
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_TWO53 = float(1 << 53)


def mix64(state: int) -> int:
    """Output function applied to an already-advanced state."""
    z = state & MASK64
    z = (z ^ (z >> 30)) * _MIX1 & MASK64
    z = (z ^ (z >> 27)) * _MIX2 & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Stateful wrapper around the SplitMix64 sequence."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def next_float(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) / _TWO53

    def next_floats(self, n: int) -> np.ndarray:
        """n uniforms, identical to n sequential next_float() calls.

        Vectorized: state after i steps is state + i*GAMMA mod 2^64, so the
        whole block mixes in one pass.
        """
        if n == 0:
            return np.empty(0, dtype=np.float64)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            s = np.uint64(self.state) + np.uint64(GAMMA) * steps
            z = s
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GAMMA) & MASK64
        return (z >> np.uint64(11)).astype(np.float64) / _TWO53

    def next_normal_pair(self) -> tuple[float, float]:
        """One Box-Muller pair from two consecutive uniforms."""
        u1 = self.next_float()
        u2 = self.next_float()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        return r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)

    def next_normals(self, n: int) -> np.ndarray:
        """n standard normals, Box-Muller pairs in order; odd n drops the spare."""
        pairs = (n + 1) // 2
        u = self.next_floats(2 * pairs)
        r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates using next_u64() % (i+1)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]
