"""Fixed-layout frames M1..M6.

Fields are packed big-endian in the order they are declared, with no headers,
tags or padding.  The layouts are the wire contract and their sizes are checked
at import time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from typing import ClassVar

from .crypto import DIGEST_BYTES, ID_BYTES, TIMESTAMP_BYTES


class LengthMismatch(ValueError):
    """Raised when a frame's bit length does not match its kind."""


_WIDTH = {"id": ID_BYTES, "digest": DIGEST_BYTES, "ts": TIMESTAMP_BYTES}


@dataclass(frozen=True)
class Frame:
    kind: ClassVar[str]
    layout: ClassVar[tuple[tuple[str, str], ...]]

    @classmethod
    def nbytes(cls) -> int:
        return sum(_WIDTH[w] for _, w in cls.layout)

    @classmethod
    def nbits(cls) -> int:
        return cls.nbytes() * 8

    @classmethod
    def offsets(cls) -> dict[str, tuple[int, int]]:
        """Field name -> (start, end) byte offsets within the encoded frame."""
        out, pos = {}, 0
        for name, w in cls.layout:
            out[name] = (pos, pos + _WIDTH[w])
            pos += _WIDTH[w]
        return out

    def __post_init__(self):
        for name, w in self.layout:
            value = getattr(self, name)
            if w == "ts":
                if not isinstance(value, int) or not 0 <= value < 1 << 32:
                    raise ValueError(f"{self.kind}.{name}: timestamp out of range: {value!r}")
            elif not isinstance(value, bytes) or len(value) != _WIDTH[w]:
                raise ValueError(f"{self.kind}.{name}: expected {_WIDTH[w]} bytes")


@dataclass(frozen=True)
class FrameM1(Frame):
    id_c: bytes
    r_c: bytes
    t_c1: int
    d1: bytes

    kind: ClassVar[str] = "M1"
    layout: ClassVar = (("id_c", "id"), ("r_c", "id"), ("t_c1", "ts"), ("d1", "digest"))


@dataclass(frozen=True)
class FrameM2(Frame):
    d2: bytes
    t_s: int

    kind: ClassVar[str] = "M2"
    layout: ClassVar = (("d2", "digest"), ("t_s", "ts"))


@dataclass(frozen=True)
class FrameM3(Frame):
    c1: bytes
    r_c: bytes
    t_c1: int
    p_id_c: bytes

    kind: ClassVar[str] = "M3"
    layout: ClassVar = (("c1", "digest"), ("r_c", "id"), ("t_c1", "ts"), ("p_id_c", "id"))


@dataclass(frozen=True)
class FrameM4(Frame):
    c1: bytes
    c2: bytes
    p_id_c: bytes
    t_gw1: int

    kind: ClassVar[str] = "M4"
    layout: ClassVar = (("c1", "digest"), ("c2", "digest"), ("p_id_c", "id"), ("t_gw1", "ts"))


@dataclass(frozen=True)
class FrameM5(Frame):
    t_s: int
    c3: bytes
    c4: bytes
    c5: bytes

    kind: ClassVar[str] = "M5"
    layout: ClassVar = (("t_s", "ts"), ("c3", "digest"), ("c4", "digest"), ("c5", "digest"))


@dataclass(frozen=True)
class FrameM6(Frame):
    c5: bytes
    c6: bytes
    t_s: int
    t_gw2: int

    kind: ClassVar[str] = "M6"
    layout: ClassVar = (("c5", "digest"), ("c6", "digest"), ("t_s", "ts"), ("t_gw2", "ts"))


FRAME_TYPES: dict[str, type[Frame]] = {
    cls.kind: cls for cls in (FrameM1, FrameM2, FrameM3, FrameM4, FrameM5, FrameM6)
}

FRAME_BITS = {"M1": 544, "M2": 288, "M3": 544, "M4": 672, "M5": 800, "M6": 576}
PAIRING_KINDS = ("M1", "M2")
AUTH_KINDS = ("M3", "M4", "M5", "M6")

for _kind, _cls in FRAME_TYPES.items():
    assert _cls.nbits() == FRAME_BITS[_kind], f"{_kind} layout drifted from {FRAME_BITS[_kind]} bits"
    assert [f.name for f in fields(_cls)] == [n for n, _ in _cls.layout]


def encode(frame: Frame) -> bytes:
    parts = []
    for name, w in frame.layout:
        value = getattr(frame, name)
        parts.append(struct.pack(">I", value) if w == "ts" else value)
    return b"".join(parts)


def decode(kind: str, bits: bytes) -> Frame:
    try:
        cls = FRAME_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown message kind {kind!r}") from None
    if len(bits) != cls.nbytes():
        raise LengthMismatch(f"{kind} needs {cls.nbits()} bits, got {len(bits) * 8}")
    values = {}
    for name, (start, end) in cls.offsets().items():
        chunk = bits[start:end]
        values[name] = struct.unpack(">I", chunk)[0] if end - start == TIMESTAMP_BYTES else chunk
    return cls(**values)


def to_hex(bits: bytes) -> str:
    return bits.hex()
