"""Tagged, length-prefixed wire frames.

Wire format, identical on every transport: one tag byte, a 3-byte
big-endian payload length, then the payload.  The ten tags cover normal
session traffic (DATA, BRANCH, ITER, CLOSE) and the delegation vocabulary
(START_DELEGATION, PORT, DS, DSACK, CRED, LM).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .errors import FrameTooLarge, TransportError

MAX_PAYLOAD = 2**24 - 1
HEADER_LEN = 4


class Tag(IntEnum):
    DATA = 0x01
    BRANCH = 0x02
    ITER = 0x03
    CLOSE = 0x04
    START_DELEGATION = 0x05
    PORT = 0x06
    DS = 0x07
    DSACK = 0x08
    CRED = 0x09
    LM = 0x0A


@dataclass(frozen=True)
class Frame:
    tag: Tag
    payload: bytes = b""

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise FrameTooLarge(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")


def encode_frame(f: Frame) -> bytes:
    return bytes([f.tag]) + len(f.payload).to_bytes(3, "big") + f.payload


def decode_frame(data: bytes) -> Frame:
    if len(data) < HEADER_LEN:
        raise TransportError("frame shorter than header")
    try:
        tag = Tag(data[0])
    except ValueError:
        raise TransportError(f"unknown frame tag {data[0]:#04x}") from None
    length = int.from_bytes(data[1:4], "big")
    if len(data) != HEADER_LEN + length:
        raise TransportError("frame length field does not match data")
    return Frame(tag, data[4:])
