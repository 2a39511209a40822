"""Bit-packed binary code matrices.

Bit ``k`` of an entity's code lives in word ``k // 64`` at bit position
``k % 64``; padding bits above ``r`` are always zero so word-wise XOR and
popcount give exact Hamming distances.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptArtifact, LengthMismatch

WORD_BITS = 64
CODE_MAGIC = b"CGHB"
CODE_VERSION = 1
_CODE_HEADER = struct.Struct("<4sIQI")


def n_words(r: int) -> int:
    return (r + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits) -> np.ndarray:
    """(n, r) array of 0/1 -> (n, ceil(r/64)) uint64 words."""
    bits = np.asarray(bits)
    if bits.ndim == 1:
        return pack_bits(bits[None, :])[0]
    n, r = bits.shape
    w = n_words(r)
    padded = np.zeros((n, w * WORD_BITS), dtype=np.uint8)
    padded[:, :r] = bits != 0
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64).reshape(n, w)


def unpack_bits(words, r: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns uint8 bits of shape (n, r)."""
    words = np.asarray(words, dtype=np.uint64)
    if words.ndim == 1:
        return unpack_bits(words[None, :], r)[0]
    n, w = words.shape
    if w != n_words(r):
        raise LengthMismatch(f"{w} words cannot hold exactly {r} bits")
    as_bytes = np.ascontiguousarray(words.astype("<u8")).view(np.uint8).reshape(n, w * 8)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :r]


@dataclass(frozen=True, eq=False)
class BinaryCodeMatrix:
    """``n`` codes of ``r`` bits each, packed into uint64 words."""

    words: np.ndarray
    r: int

    def __post_init__(self):
        w = np.ascontiguousarray(self.words, dtype=np.uint64)
        if w.ndim != 2 or w.shape[1] != n_words(self.r):
            raise LengthMismatch(f"word array {w.shape} does not fit r={self.r}")
        tail = self.r % WORD_BITS
        if tail and w.size and np.any(w[:, -1] >> np.uint64(tail)):
            raise ValueError("padding bits must be zero")
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    @classmethod
    def from_bits(cls, bits) -> BinaryCodeMatrix:
        bits = np.atleast_2d(np.asarray(bits))
        return cls(pack_bits(bits), bits.shape[1])

    @property
    def n(self) -> int:
        return self.words.shape[0]

    def __len__(self):
        return self.n

    def bits(self, rows=None) -> np.ndarray:
        w = self.words if rows is None else self.words[np.asarray(rows)]
        return unpack_bits(w, self.r)

    def code(self, i) -> np.ndarray:
        return self.words[i]

    def __eq__(self, other):
        if not isinstance(other, BinaryCodeMatrix):
            return NotImplemented
        return self.r == other.r and np.array_equal(self.words, other.words)


def save_codes(codes: BinaryCodeMatrix, path):
    with open(path, "wb") as fh:
        fh.write(_CODE_HEADER.pack(CODE_MAGIC, CODE_VERSION, codes.n, codes.r))
        fh.write(codes.words.astype("<u8").tobytes())


def load_codes(path) -> BinaryCodeMatrix:
    try:
        with open(path, "rb") as fh:
            head = fh.read(_CODE_HEADER.size)
            body = fh.read()
    except OSError as exc:
        raise CorruptArtifact(str(exc)) from None
    if len(head) != _CODE_HEADER.size:
        raise CorruptArtifact(f"{path}: truncated header")
    magic, version, n, r = _CODE_HEADER.unpack(head)
    w = n_words(r)
    if magic != CODE_MAGIC or version != CODE_VERSION or len(body) != 8 * n * w:
        raise CorruptArtifact(f"{path}: not a code file or wrong size")
    words = np.frombuffer(body, dtype="<u8").reshape(n, w).astype(np.uint64)
    try:
        return BinaryCodeMatrix(words, r)
    except ValueError as exc:
        raise CorruptArtifact(f"{path}: {exc}") from None
