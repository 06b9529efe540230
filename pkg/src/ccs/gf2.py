"""Bit-packed linear algebra over GF(2).

Bit order is MSB-first everywhere: bit 0 of a length-``n`` vector is the most
significant bit of its integer value, so ``BitVector.from_bits([1, 0, 1]).value``
is 5.  Matrix rows are packed the same way (column 0 is the MSB of a row word).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

_CHUNK = 8


def as_generator(rng) -> np.random.Generator:
    """Accept a seed, ``SeedSequence`` or ``Generator`` and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class BitVector:
    value: int
    length: int

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.value < 0 or self.value >> self.length:
            raise ValueError(f"value {self.value} does not fit in {self.length} bits")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVector":
        value = 0
        n = 0
        for b in bits:
            if b not in (0, 1):
                raise ValueError(f"bit must be 0 or 1, got {b!r}")
            value = (value << 1) | int(b)
            n += 1
        return cls(value, n)

    @classmethod
    def from_str(cls, text: str) -> "BitVector":
        return cls.from_bits(int(c) for c in text)

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(0, length)

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> (self.length - 1 - i)) & 1 for i in range(self.length))

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not -self.length <= i < self.length:
            raise IndexError(i)
        i %= self.length
        return (self.value >> (self.length - 1 - i)) & 1

    def __xor__(self, other: "BitVector") -> "BitVector":
        if self.length != other.length:
            raise ValueError("length mismatch")
        return BitVector(self.value ^ other.value, self.length)

    def concat(self, other: "BitVector") -> "BitVector":
        return BitVector((self.value << other.length) | other.value, self.length + other.length)

    def slice(self, start: int, stop: int) -> "BitVector":
        """Bits ``start:stop`` as a new vector."""
        if not 0 <= start <= stop <= self.length:
            raise ValueError("slice out of range")
        width = stop - start
        return BitVector((self.value >> (self.length - stop)) & ((1 << width) - 1), width)

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


@dataclass(frozen=True, eq=False)
class BitMatrix:
    """Dense GF(2) matrix; ``data`` is a read-only ``uint8`` array of shape (rows, cols)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise ValueError("BitMatrix data must be two-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("BitMatrix entries must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(np.zeros((rows, cols), dtype=np.uint8))

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls(np.eye(n, dtype=np.uint8))

    @classmethod
    def ones(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(np.ones((rows, cols), dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        return isinstance(other, BitMatrix) and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.shape, self.data.tobytes()))

    @cached_property
    def row_words(self) -> tuple[int, ...]:
        """Each row packed into an int, column 0 as the most significant bit."""
        words = []
        for row in self.data:
            w = 0
            for b in row:
                w = (w << 1) | int(b)
            words.append(w)
        return tuple(words)

    @cached_property
    def _tables(self) -> list[tuple[int, int, np.ndarray]]:
        # (shift, width, table) per 8-row chunk; table[x] = XOR of the chunk's rows selected by x
        out = []
        words = self.row_words
        r = self.rows
        start = 0
        while start < r:
            width = min(_CHUNK, r - start)
            table = np.zeros(1, dtype=np.int64)
            # the chunk's last row is its least significant selector bit
            for row in range(start + width - 1, start - 1, -1):
                table = np.concatenate([table, table ^ words[row]])
            out.append((r - start - width, width, table))
            start += width
        return out

    def matvec_many(self, values: np.ndarray) -> np.ndarray:
        """Row-vector products ``v·G`` for an array of packed ``rows``-bit integers."""
        values = np.asarray(values, dtype=np.int64)
        if self.cols > 62:
            raise ValueError("batched products require cols <= 62")
        out = np.zeros(values.shape, dtype=np.int64)
        for shift, width, table in self._tables:
            out ^= table[(values >> shift) & ((1 << width) - 1)]
        return out


def sample_rademacher(rows: int, cols: int, rng) -> BitMatrix:
    """I.i.d. fair bits; identical seed gives an identical matrix."""
    if rows < 0 or cols < 0:
        raise ValueError("dimensions must be non-negative")
    gen = as_generator(rng)
    return BitMatrix(gen.integers(0, 2, size=(rows, cols), dtype=np.uint8))


def matvec_mod2(v: BitVector, G: BitMatrix) -> BitVector:
    """``v·G`` over GF(2): XOR of the rows of ``G`` selected by the set bits of ``v``."""
    if v.length != G.rows:
        raise ValueError(f"dimension mismatch: vector length {v.length}, matrix rows {G.rows}")
    acc = 0
    words = G.row_words
    x = v.value
    r = 0
    while x:
        if x & 1:
            acc ^= words[G.rows - 1 - r]
        x >>= 1
        r += 1
    return BitVector(acc, G.cols)


def rank_mod2(G: BitMatrix) -> int:
    """Rank over GF(2) by elimination on packed rows."""
    pivots: dict[int, int] = {}  # leading-bit position -> basis row
    for w in G.row_words:
        while w:
            lead = w.bit_length() - 1
            basis = pivots.get(lead)
            if basis is None:
                pivots[lead] = w
                break
            w ^= basis
    return len(pivots)
