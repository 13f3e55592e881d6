"""Bloom filter over 64-bit k-mer codes with standard m/h sizing."""

from __future__ import annotations

import math

from .kmers import mix64

_MASK64 = (1 << 64) - 1


def optimal_bits(n: int, fp: float) -> int:
    """m = -n ln p / (ln 2)^2, floored at 64 bits."""
    if not 0.0 < fp < 1.0:
        raise ValueError("false-positive target must be in (0, 1)")
    n = max(1, n)
    return max(64, int(-n * math.log(fp) / (math.log(2) ** 2)))


def optimal_hashes(m: int, n: int) -> int:
    """h = (m/n) ln 2, at least 1."""
    return max(1, round(m / max(1, n) * math.log(2)))


class BloomFilter:
    """Plain bloom filter keyed by integer codes.

    Double hashing: h_i = mix(code) + i * mix(code ^ salt), all arithmetic
    fixed so membership is reproducible across runs and platforms.
    """

    __slots__ = ("n_bits", "n_hashes", "_bits")

    def __init__(self, n_bits: int, n_hashes: int):
        self.n_bits = n_bits
        self.n_hashes = n_hashes
        self._bits = bytearray((n_bits + 7) // 8)

    @classmethod
    def with_capacity(cls, expected: int, fp: float) -> "BloomFilter":
        m = optimal_bits(expected, fp)
        return cls(m, optimal_hashes(m, expected))

    def _positions(self, code: int):
        h1 = mix64(code)
        h2 = mix64(code ^ 0xA5A5A5A5A5A5A5A5) | 1
        m = self.n_bits
        for i in range(self.n_hashes):
            yield ((h1 + i * h2) & _MASK64) % m

    def add(self, code: int) -> None:
        bits = self._bits
        for pos in self._positions(code):
            bits[pos >> 3] |= 1 << (pos & 7)

    def __contains__(self, code: int) -> bool:
        bits = self._bits
        return all(bits[pos >> 3] & (1 << (pos & 7)) for pos in self._positions(code))

    def to_bytes(self) -> bytes:
        return bytes(self._bits)

    @classmethod
    def from_bytes(cls, n_bits: int, n_hashes: int, data: bytes) -> "BloomFilter":
        bf = cls(n_bits, n_hashes)
        if len(data) != len(bf._bits):
            raise ValueError("bloom payload size mismatch")
        bf._bits = bytearray(data)
        return bf
