"""Hashing, identity truncation and XOR keystream masking.

All bit-strings handled here are ``bytes``; every protocol field and frame is
a whole number of octets.  ``expand_pad`` still takes a length in *bits* so
callers can state sizes the way the wire contract does.
"""

from __future__ import annotations

import hashlib
import struct
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .metrics import OpCounters

DIGEST_BITS = 256
ID_BITS = 128
TIMESTAMP_BITS = 32

DIGEST_BYTES = DIGEST_BITS // 8
ID_BYTES = ID_BITS // 8
TIMESTAMP_BYTES = TIMESTAMP_BITS // 8


def digest(data: bytes) -> bytes:
    """SHA3-256 of ``data`` (32 bytes)."""
    return hashlib.sha3_256(data).digest()


def truncate_id(d: bytes) -> bytes:
    """Most-significant 128 bits of a digest."""
    if len(d) != DIGEST_BYTES:
        raise ValueError(f"expected a {DIGEST_BITS}-bit digest, got {len(d) * 8} bits")
    return d[:ID_BYTES]


def pad_blocks(nbits: int) -> int:
    """Number of digest calls ``expand_pad`` needs for ``nbits`` of keystream."""
    return -(-nbits // DIGEST_BITS)


def expand_pad(key: bytes, nbits: int) -> bytes:
    """Counter-mode keystream: the first ``nbits`` of h(key||0) || h(key||1) || ...

    The counter is a 32-bit big-endian integer.  If ``nbits`` is not a multiple
    of 8 the unused low-order bits of the final byte are zero.
    """
    if nbits <= 0:
        raise ValueError("pad length must be positive")
    out = b"".join(digest(key + struct.pack(">I", i)) for i in range(pad_blocks(nbits)))
    nbytes = -(-nbits // 8)
    out = bytearray(out[:nbytes])
    spare = nbytes * 8 - nbits
    if spare:
        out[-1] &= (0xFF << spare) & 0xFF
    return bytes(out)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands differ in length")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def mask(frame: bytes, key: bytes) -> bytes:
    """XOR ``frame`` with the keystream derived from ``key``.  Self-inverse."""
    if not frame:
        raise ValueError("cannot mask an empty frame")
    return xor_bytes(frame, expand_pad(key, len(frame) * 8))


def encode_ts(ticks: int) -> bytes:
    """32-bit big-endian timestamp field."""
    if not 0 <= ticks < 1 << TIMESTAMP_BITS:
        raise ValueError(f"timestamp {ticks} does not fit in {TIMESTAMP_BITS} bits")
    return struct.pack(">I", ticks)


class CountedCrypto:
    """Per-entity facade over the primitives that bumps an entity's counters.

    Protocol hashes and keystream hashes land in separate counters so the
    masking construction does not inflate the protocol's hash budget.
    """

    def __init__(self, counters: "OpCounters | None" = None):
        self.counters = counters

    def h(self, *parts: bytes) -> bytes:
        if self.counters is not None:
            self.counters.protocol_hashes += 1
        return digest(b"".join(parts))

    def h_id(self, *parts: bytes) -> bytes:
        return truncate_id(self.h(*parts))

    def mask(self, frame: bytes, key: bytes) -> bytes:
        if self.counters is not None:
            self.counters.xor_masks += 1
            self.counters.pad_hashes += pad_blocks(len(frame) * 8)
        return mask(frame, key)

    def xor(self, a: bytes, b: bytes) -> bytes:
        if self.counters is not None:
            self.counters.xor_masks += 1
        return xor_bytes(a, b)
