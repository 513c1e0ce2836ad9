"""Deterministic PCG-XSH-RR 64/32 random streams.

Every consumer of randomness (weight init, augmentation, shuffling, the
synthetic corpus) asks a root :class:`Rng` for a substream keyed by a purpose
tag and an index, so the draws seen by one consumer never depend on how many
numbers another consumer pulled.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

MASK64 = (1 << 64) - 1
MULTIPLIER = 6364136223846793005
_BLOCK = 1024


def _output(old: np.ndarray) -> np.ndarray:
    # XSH-RR permutation, vectorized over uint64 states.
    xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)) & np.uint64(0xFFFFFFFF)
    rot = old >> np.uint64(59)
    left = (np.uint64(32) - rot) & np.uint64(31)
    out = (xorshifted >> rot) | (xorshifted << left)
    return (out & np.uint64(0xFFFFFFFF)).astype(np.uint32)


class Pcg32:
    """One PCG32 stream (64-bit state, 32-bit output).

    Seeding follows the reference ``pcg32_srandom_r``.
    """

    def __init__(self, initstate: int, initseq: int):
        self.inc = ((initseq << 1) | 1) & MASK64
        self.state = 0
        self._step()
        self.state = (self.state + initstate) & MASK64
        self._step()
        self._tables = None

    def _step(self) -> None:
        self.state = (self.state * MULTIPLIER + self.inc) & MASK64

    def next_u32(self) -> int:
        old = self.state
        self._step()
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def _jump_tables(self):
        # s_k = A_k * s_0 + C_k for k < _BLOCK, plus the full-block jump.
        if self._tables is None:
            a_k = np.empty(_BLOCK, dtype=np.uint64)
            c_k = np.empty(_BLOCK, dtype=np.uint64)
            a, c = 1, 0
            for k in range(_BLOCK):
                a_k[k] = a
                c_k[k] = c
                a = (a * MULTIPLIER) & MASK64
                c = (c * MULTIPLIER + self.inc) & MASK64
            self._tables = (a_k, c_k, a, c)
        return self._tables

    def random_u32(self, n: int) -> np.ndarray:
        """Next ``n`` outputs as a uint32 array; identical to ``n`` calls of :meth:`next_u32`."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n < 32:
            return np.array([self.next_u32() for _ in range(n)], dtype=np.uint32)
        a_k, c_k, a_blk, c_blk = self._jump_tables()
        nblocks = -(-n // _BLOCK)
        starts = np.empty(nblocks, dtype=np.uint64)
        s = self.state
        for j in range(nblocks):
            starts[j] = s
            s = (s * a_blk + c_blk) & MASK64
        states = (starts[:, None] * a_k[None, :] + c_k[None, :]).reshape(-1)[:n]
        # advance by exactly n steps
        last = int(states[-1])
        self.state = (last * MULTIPLIER + self.inc) & MASK64
        return _output(states)

    def uniform(self, n: int) -> np.ndarray:
        """Floats in [0, 1) with 32-bit resolution."""
        return self.random_u32(n).astype(np.float64) * (1.0 / 4294967296.0)

    def normal(self, n: int, std: float = 1.0) -> np.ndarray:
        """Box-Muller normals, one per pair of outputs (cosine branch only)."""
        raw = self.random_u32(2 * n).astype(np.float64)
        u1 = (raw[0::2] + 1.0) * (1.0 / 4294967296.0)
        u2 = raw[1::2] * (1.0 / 4294967296.0)
        return std * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def integers(self, bound: int) -> int:
        """Unbiased integer in [0, bound) with bound < 2**32."""
        if not 0 < bound <= 0xFFFFFFFF:
            raise ValueError("bound must be in (0, 2**32)")
        threshold = ((1 << 32) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def bernoulli(self, p: float = 0.5) -> bool:
        return self.next_u32() * (1.0 / 4294967296.0) < p

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``."""
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            items[i], items[j] = items[j], items[i]
        return items


class Rng:
    """Root generator: a seed from which keyed substreams are derived."""

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
        self.seed = int(seed)

    def stream(self, tag: str, *index: int) -> Pcg32:
        key = "/".join([str(self.seed), tag, *(str(int(i)) for i in index)])
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=16).digest()
        initstate = int.from_bytes(digest[:8], "little")
        initseq = int.from_bytes(digest[8:], "little")
        return Pcg32(initstate, initseq)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"
