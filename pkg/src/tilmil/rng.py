"""Portable 64-bit PRNG: xoshiro256** seeded through splitmix64.

Every random draw in the package (synthetic data, weight init, shuffles,
tile subsampling, split dealing) goes through :class:`Xoshiro256` so a
given seed yields the same stream on any platform.

Derived quantities are defined as follows so they can be reproduced
elsewhere:

* ``random()``: ``(next_u64() >> 11) * 2**-53``, in [0, 1).
* ``below(n)``: Lemire's multiply-shift with rejection, unbiased in [0, n).
* ``shuffle``: Fisher-Yates from the last index down, ``j = below(i + 1)``.
* ``standard_normal``: Box-Muller on pairs ``u1 = 1 - random()``,
  ``u2 = random()``; emits ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)``.
"""
from __future__ import annotations

import math
from typing import MutableSequence, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *coords: int) -> int:
    """Hash a base seed and integer coordinates into an independent seed.

    Used to give every (grid cell, fold) its own stream, so work units can
    run in any order without changing their draws.
    """
    state = seed & MASK64
    state, out = splitmix64(state)
    for c in coords:
        state, out = splitmix64(out ^ (c & MASK64))
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** generator (Blackman & Vigna)."""

    __slots__ = ("_s", "_spare")

    def __init__(self, seed: int = 0):
        state = seed & MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words
        self._spare: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s1 * 5) & MASK64
        result = ((((x << 7) | (x >> 57)) & MASK64) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        m = self.next_u64() * n
        low = m & MASK64
        if low < n:
            threshold = ((1 << 64) - n) % n
            while low < threshold:
                m = self.next_u64() * n
                low = m & MASK64
        return m >> 64

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in the closed range [low, high]."""
        return low + self.below(high - low + 1)

    def shuffle(self, items: MutableSequence) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), returned in ascending order.

        Partial Fisher-Yates over the first m = min(k, n - k) slots; when
        k > n/2 those m slots are the indices dropped rather than kept.
        """
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        m = min(k, n - k)
        idx = list(range(n))
        for i in range(m):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        if m == k:
            return sorted(idx[:k])
        return sorted(idx[m:])

    def uniform_array(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        raw = np.fromiter((self.next_u64() >> 11 for _ in range(size)), dtype=np.float64, count=size)
        return low + (high - low) * (raw * (1.0 / 9007199254740992.0))

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.random()
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def standard_normal(self, size: int) -> np.ndarray:
        """Vector of N(0, 1) draws, consuming the stream exactly like ``size`` calls to normal()."""
        out = np.empty(size, dtype=np.float64)
        start = 0
        if size and self._spare is not None:
            out[0] = self.normal()
            start = 1
        remaining = size - start
        pairs = remaining // 2
        if pairs:
            raw = np.fromiter(
                (self.next_u64() >> 11 for _ in range(2 * pairs)), dtype=np.float64, count=2 * pairs
            ) * (1.0 / 9007199254740992.0)
            u1 = 1.0 - raw[0::2]
            u2 = raw[1::2]
            r = np.sqrt(-2.0 * np.log(u1))
            out[start : start + 2 * pairs : 2] = r * np.cos(2.0 * np.pi * u2)
            out[start + 1 : start + 2 * pairs : 2] = r * np.sin(2.0 * np.pi * u2)
        if remaining % 2:
            out[-1] = self.normal()
        return out
