"""Bit-packed {-1,+1} tensors and the xnor/popcount dot product.

Encoding: bit 1 <-> +1, bit 0 <-> -1, packed little-endian within 64-bit
words over the row-major flat index ([batch][channel][row][col], leading
dims optional).  Every tensor carries a validity mask packed the same way;
positions with mask bit 0 are padding and contribute nothing to dot
products.  The encoding is fixed so weight and plan files stay portable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NonBinaryValue

WORD_BITS = 64

_ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def num_words(nbits: int) -> int:
    """Words needed to hold nbits."""
    return -(-nbits // WORD_BITS)


def pack_words(bits: np.ndarray) -> np.ndarray:
    """Pack 0/1 values along the last axis into uint64 words.

    Element i of a row lands in word i // 64, bit i % 64: little bit order
    within bytes plus little-endian bytes within each word.  Trailing bits
    of the last word are zero.
    """
    bits = np.asarray(bits)
    if bits.dtype != bool:
        bits = bits.astype(bool)
    n = bits.shape[-1]
    nw = num_words(n)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    if packed.shape[-1] != nw * 8:
        widened = np.zeros(bits.shape[:-1] + (nw * 8,), dtype=np.uint8)
        widened[..., :packed.shape[-1]] = packed
        packed = widened
    return np.ascontiguousarray(packed).view(np.uint64)


def unpack_words(words: np.ndarray, nbits: int) -> np.ndarray:
    """Inverse of pack_words: uint8 0/1 values along the last axis."""
    raw = np.ascontiguousarray(words, dtype=np.uint64).view(np.uint8)
    return np.unpackbits(raw, axis=-1, bitorder="little")[..., :nbits]


def popcount(words: np.ndarray) -> np.ndarray:
    """Per-word set-bit counts (uint8); sum with an explicit wide dtype."""
    return np.bitwise_count(words)


@dataclass(frozen=True, eq=False)
class BinaryTensor:
    """Bit-packed {-1,+1} tensor of up to 4 dimensions with a validity mask.

    Constructors canonicalize: value bits under invalid positions and bits
    beyond the logical size are forced to zero, and the backing arrays are
    frozen, so instances are safe to share across threads.
    """

    dims: tuple[int, ...]
    words: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not 1 <= len(dims) <= 4:
            raise LengthMismatch(f"BinaryTensor supports 1..4 dims, got {dims!r}")
        nbits = math.prod(dims)
        nw = num_words(nbits)
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        mask = np.array(self.valid_mask, dtype=np.uint64, copy=True)
        if words.shape != (nw,) or mask.shape != (nw,):
            raise LengthMismatch(
                f"expected {nw} words for {nbits} bits, got words {words.shape}, mask {mask.shape}"
            )
        tail = nw * WORD_BITS - nbits
        if nw and tail:
            mask[-1] &= _ALL_ONES >> np.uint64(tail)
        words = words & mask
        words.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "valid_mask", mask)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_bits(cls, bits: np.ndarray, dims, valid: np.ndarray | None = None) -> "BinaryTensor":
        """Build from a 0/1 (or bool) array; valid defaults to all positions."""
        dims = tuple(int(d) for d in dims)
        nbits = math.prod(dims)
        flat = np.asarray(bits).reshape(-1)
        if flat.shape[0] != nbits:
            raise LengthMismatch(f"{flat.shape[0]} bits for dims {dims}")
        words = pack_words(flat)
        if valid is None:
            mask = full_mask(nbits)
        else:
            vflat = np.asarray(valid).reshape(-1)
            if vflat.shape[0] != nbits:
                raise LengthMismatch(f"{vflat.shape[0]} mask bits for dims {dims}")
            mask = pack_words(vflat)
        return cls(dims, words, mask)

    # -- views -------------------------------------------------------------

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def nwords(self) -> int:
        return num_words(self.size)

    def unpack(self) -> np.ndarray:
        """int8 array shaped dims: +1/-1 at valid positions, 0 at invalid."""
        bits = unpack_words(self.words, self.size).astype(np.int8)
        valid = unpack_words(self.valid_mask, self.size).astype(np.int8)
        return ((2 * bits - 1) * valid).reshape(self.dims)

    def value_bits(self) -> np.ndarray:
        """bool array shaped dims; True where the value is +1."""
        return unpack_words(self.words, self.size).astype(bool).reshape(self.dims)

    def mask_bits(self) -> np.ndarray:
        """bool array shaped dims; True where the position is real."""
        return unpack_words(self.valid_mask, self.size).astype(bool).reshape(self.dims)

    def fully_valid(self) -> bool:
        return int(popcount(self.valid_mask).sum(dtype=np.int64)) == self.size

    def with_dims(self, dims) -> "BinaryTensor":
        """Reinterpret the same bits under new dims of equal total size."""
        dims = tuple(int(d) for d in dims)
        if math.prod(dims) != self.size:
            raise LengthMismatch(f"cannot view {self.dims} as {dims}")
        return BinaryTensor(dims, self.words, self.valid_mask)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BinaryTensor)
            and self.dims == other.dims
            and np.array_equal(self.words, other.words)
            and np.array_equal(self.valid_mask, other.valid_mask)
        )


def full_mask(nbits: int) -> np.ndarray:
    """All-valid mask words for nbits (trailing bits zero)."""
    nw = num_words(nbits)
    mask = np.full(nw, _ALL_ONES, dtype=np.uint64)
    tail = nw * WORD_BITS - nbits
    if nw and tail:
        mask[-1] >>= np.uint64(tail)
    return mask


def pack_bits(values, dims) -> BinaryTensor:
    """Pack a +-1 sequence into a fully-valid BinaryTensor.

    Raises LengthMismatch if len(values) != prod(dims) and NonBinaryValue if
    any element is outside {-1, +1}.
    """
    dims = tuple(int(d) for d in dims)
    vals = np.asarray(values).reshape(-1)
    if vals.shape[0] != math.prod(dims):
        raise LengthMismatch(f"{vals.shape[0]} values for dims {dims}")
    if vals.size and not np.isin(vals, (-1, 1)).all():
        bad = vals[~np.isin(vals, (-1, 1))][0]
        raise NonBinaryValue(f"value {bad!r} is not in {{-1, +1}}")
    return BinaryTensor.from_bits(vals == 1, dims)


def xnor_popcount_dot(a: BinaryTensor, b: BinaryTensor) -> int:
    """Dot product of two +-1 vectors over their jointly valid positions.

    Returns 2*popcount(xnor(a, b) & m) - popcount(m) with m the AND of the
    validity masks, which equals sum(a_i * b_i) over valid i.
    """
    if a.size != b.size:
        raise LengthMismatch(f"bit lengths differ: {a.size} vs {b.size}")
    m = a.valid_mask & b.valid_mask
    agree = int(popcount(~(a.words ^ b.words) & m).sum(dtype=np.int64))
    nbits = int(popcount(m).sum(dtype=np.int64))
    return 2 * agree - nbits


@dataclass(frozen=True, eq=False)
class IntTensor:
    """Signed 32-bit integer tensor (pre-activations, thresholds, pixels)."""

    dims: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        vals = np.asarray(self.values, dtype=np.int32)
        if vals.size != math.prod(dims):
            raise LengthMismatch(f"{vals.size} values for dims {dims}")
        vals = np.ascontiguousarray(vals.reshape(dims))
        vals.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def with_dims(self, dims) -> "IntTensor":
        dims = tuple(int(d) for d in dims)
        if math.prod(dims) != self.size:
            raise LengthMismatch(f"cannot view {self.dims} as {dims}")
        return IntTensor(dims, self.values.reshape(dims))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IntTensor)
            and self.dims == other.dims
            and np.array_equal(self.values, other.values)
        )
