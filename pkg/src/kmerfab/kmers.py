"""Read parsing, 2-bit k-mer encoding, canonicalization and partitioning.

Encoding: A=00, C=01, G=10, T=11, first base in the most significant pair,
so integer order on codes equals alphabetical order on the strings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

BASE_CODE = {"A": 0, "C": 1, "G": 2, "T": 3}
CODE_BASE = "ACGT"
MAX_K = 32

# multiply-shift mixing constant (odd, 64-bit golden ratio)
_HASH_MULT = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


class Origin(enum.Enum):
    NORMAL = "normal"
    TUMORAL = "tumoral"


class ParseError(ValueError):
    """Malformed read input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Read:
    id: int
    origin: Origin
    bases: str

    @property
    def length(self) -> int:
        return len(self.bases)


@dataclass(frozen=True)
class KMer:
    """Canonical or raw k-mer packed into an int (2 bits per base)."""

    code: int
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= MAX_K:
            raise ValueError(f"k must be in [1, {MAX_K}], got {self.k}")
        if not 0 <= self.code < (1 << (2 * self.k)):
            raise ValueError(f"code {self.code} out of range for k={self.k}")

    def __str__(self) -> str:
        return decode(self.code, self.k)


@dataclass
class ReadSet:
    reads: list[Read] = field(default_factory=list)
    k: int = 30

    def __iter__(self) -> Iterator[Read]:
        return iter(self.reads)

    def __len__(self) -> int:
        return len(self.reads)


def encode(bases: str) -> int:
    code = 0
    for b in bases:
        code = (code << 2) | BASE_CODE[b]
    return code


def decode(code: int, k: int) -> str:
    return "".join(CODE_BASE[(code >> (2 * (k - i - 1))) & 3] for i in range(k))


def revcomp(code: int, k: int) -> int:
    """Reverse complement under the 2-bit encoding (complement = XOR 0b11)."""
    rc = 0
    for _ in range(k):
        rc = (rc << 2) | ((code & 3) ^ 3)
        code >>= 2
    return rc


def canonical(kmer: KMer) -> KMer:
    return KMer(min(kmer.code, revcomp(kmer.code, kmer.k)), kmer.k)


def parse_reads(stream: TextIO | Iterable[str], origin: Origin) -> ReadSet:
    """Parse FASTA-like input: '>' header line, then one sequence line.

    Bases are upper-cased; only A,C,G,T,N are accepted. Raises ParseError
    with the offending line number on malformed input.
    """
    reads: list[Read] = []
    allowed = set("ACGTN")
    pending_header = False
    line_no = 0
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line:
            continue
        if line.startswith(">"):
            if pending_header:
                raise ParseError(line_no, "header without sequence line")
            pending_header = True
            continue
        if not pending_header:
            raise ParseError(line_no, "sequence line before any header")
        bases = line.upper()
        bad = set(bases) - allowed
        if bad:
            raise ParseError(line_no, f"illegal character {sorted(bad)[0]!r}")
        reads.append(Read(id=len(reads), origin=origin, bases=bases))
        pending_header = False
    if pending_header:
        raise ParseError(line_no, "header without sequence line")
    return ReadSet(reads=reads)


def window_codes(bases: str, k: int) -> list[int]:
    """Raw (non-canonical) codes of every k-window without N, in read order."""
    if not 1 <= k <= MAX_K:
        raise ValueError(f"k must be in [1, {MAX_K}], got {k}")
    n = len(bases)
    if n < k:
        return []
    out = []
    mask = (1 << (2 * k)) - 1
    code = 0
    valid = 0  # bases accumulated since the last N
    lookup = BASE_CODE
    for b in bases:
        v = lookup.get(b)
        if v is None:  # N resets the window
            valid = 0
            code = 0
            continue
        code = ((code << 2) | v) & mask
        valid += 1
        if valid >= k:
            out.append(code)
    return out


def canonical_codes(bases: str, k: int) -> list[int]:
    """Canonical code of every valid k-window; the pipeline's hot path."""
    if not 1 <= k <= MAX_K:
        raise ValueError(f"k must be in [1, {MAX_K}], got {k}")
    n = len(bases)
    if n < k:
        return []
    out = []
    append = out.append
    mask = (1 << (2 * k)) - 1
    shift = 2 * (k - 1)
    fwd = 0
    rev = 0
    valid = 0
    lookup = BASE_CODE
    for b in bases:
        v = lookup.get(b)
        if v is None:
            valid = 0
            fwd = 0
            rev = 0
            continue
        fwd = ((fwd << 2) | v) & mask
        rev = (rev >> 2) | ((v ^ 3) << shift)
        valid += 1
        if valid >= k:
            append(fwd if fwd <= rev else rev)
    return out


def kmers_of(read: Read, k: int) -> list[KMer]:
    """Canonical KMer per window of k consecutive non-N bases."""
    return [KMer(c, k) for c in canonical_codes(read.bases, k)]


def mix64(x: int) -> int:
    """splitmix64 finalizer; deterministic 64-bit mix."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def partition_of(code: int, partitions: int) -> int:
    """Partition id of a canonical code: multiply-shift hash modulo P."""
    if partitions < 1:
        raise ValueError("partitions must be >= 1")
    h = ((code * _HASH_MULT) & _MASK64) >> 17
    return h % partitions
