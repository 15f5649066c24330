"""Length-prefixed binary message frames.

Layout (big-endian header): u32 length | u8 type | 16-byte session id |
u32 round | u32 gadget id | payload. ``length`` counts every byte after
itself. Payload integers are 16-byte little-endian.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

HEADER = struct.Struct(">IB16sII")
HEADER_AFTER_LENGTH = HEADER.size - 4
MAX_FRAME = 1 << 30


class FrameError(ValueError):
    pass


class MsgType(enum.IntEnum):
    SETUP = 1
    SETUP_ACK = 2
    INPUT_M_SHARE = 3
    COUNT_REQUEST = 4
    COUNT_SHARES = 5
    MATERIAL_REQUEST = 6
    MATERIAL = 7
    OPEN_PART = 8
    LAYER_DIGEST = 9
    RESULT = 10
    ABORT = 11


@dataclass(frozen=True)
class Frame:
    mtype: MsgType
    session_id: bytes
    round: int
    gadget: int
    payload: bytes = b""

    def encode(self) -> bytes:
        if len(self.session_id) != 16:
            raise FrameError("session id must be 16 bytes")
        length = HEADER_AFTER_LENGTH + len(self.payload)
        return HEADER.pack(length, self.mtype, self.session_id, self.round, self.gadget) + self.payload

    @classmethod
    def decode(cls, data: bytes) -> Frame:
        if len(data) < HEADER.size:
            raise FrameError(f"frame of {len(data)} bytes is shorter than the header")
        length, mtype, sid, rnd, gadget = HEADER.unpack_from(data)
        if length != len(data) - 4:
            raise FrameError(f"length field says {length} bytes, frame carries {len(data) - 4}")
        try:
            mtype = MsgType(mtype)
        except ValueError:
            raise FrameError(f"unknown message type {mtype}") from None
        return cls(mtype, sid, rnd, gadget, bytes(data[HEADER.size:]))


def check_length_field(prefix: bytes) -> int:
    """Validate a received 4-byte length prefix; returns the remaining byte count."""
    (length,) = struct.unpack(">I", prefix)
    if length < HEADER_AFTER_LENGTH or length > MAX_FRAME:
        raise FrameError(f"implausible frame length {length}")
    return length
