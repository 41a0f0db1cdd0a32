"""Pinned deterministic randomness for fold planning.

Plan files must be reproducible across machines, Python versions, and library
upgrades, so shuffling is built on a hand-pinned SplitMix64 stream plus a
Fisher-Yates shuffle instead of a library PRNG. The algorithm identity is
recorded in every plan file as ``rng_algorithm_id``; any future change to the
stream or the shuffle must mint a new id.
"""

from __future__ import annotations

import hashlib

RNG_ALGORITHM_ID = "splitmix64/fisher-yates-v1"

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # SplitMix64 finalizer (Steele, Lea & Flood 2014).
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class SeededRng:
    """SplitMix64 stream: identical seed, identical output, forever.

    Bounded draws use the modulo reduction of a 64-bit output; the bias is
    below 2^-50 for any bound this toolkit ever uses and the reduction is
    part of the pinned algorithm.
    """

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self._state = seed

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange bound must be positive")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_seed(seed: int, *parts: int | str) -> int:
    """Derive a domain-separated sub-seed from a parent seed.

    String parts are folded in through SHA-256 so that labels like split ids
    cannot collide with integer indices. The derivation is pinned alongside
    RNG_ALGORITHM_ID.
    """
    h = seed & _MASK64
    for part in parts:
        if isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()
            part = int.from_bytes(digest[:8], "big")
        h = _mix64((h ^ (part & _MASK64)) + _GAMMA)
    return h
