"""Event datagram codec for IED status-change bursts.

Datagram layout (big-endian throughout):

    u8 publisher_id length | publisher_id UTF-8 |
    u32 st_num | u32 sq_num | u32 ttl_ms |
    u16 dataset entry count | entries

Each dataset entry is a path TLV (0x01) followed by a value TLV (0x02) in
the same TLV encoding as the read/write protocol.  st_num increments on a
state change; sq_num counts retransmissions of the same state and resets to
zero when st_num advances.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from gridtwin.device.mmswire import (
    MmsDecodeError,
    TLV_PATH,
    TLV_VALUE,
    Value,
    decode_value,
    encode_value,
)

# Retransmission schedule after a state change: fast burst, then heartbeat.
BURST_GAPS_MS = (2.0, 4.0, 8.0, 16.0, 32.0)
HEARTBEAT_MS = 1000.0


@dataclass(frozen=True)
class GooseMessage:
    publisher_id: str
    st_num: int
    sq_num: int
    ttl_ms: int
    dataset: tuple[tuple[str, Value], ...]


def encode_goose(msg: GooseMessage) -> bytes:
    pid = msg.publisher_id.encode("utf-8")
    if len(pid) > 255:
        raise ValueError("publisher_id too long")
    out = bytes([len(pid)]) + pid
    out += struct.pack(">III", msg.st_num, msg.sq_num, msg.ttl_ms)
    out += struct.pack(">H", len(msg.dataset))
    for path, value in msg.dataset:
        p = path.encode("utf-8")
        out += struct.pack(">BH", TLV_PATH, len(p)) + p
        v = encode_value(value)
        out += struct.pack(">BH", TLV_VALUE, len(v)) + v
    return out


def decode_goose(data: bytes) -> GooseMessage:
    if len(data) < 1:
        raise MmsDecodeError("empty datagram")
    pid_len = data[0]
    offset = 1 + pid_len
    if len(data) < offset + 14:
        raise MmsDecodeError("truncated datagram header")
    publisher_id = data[1:offset].decode("utf-8")
    st_num, sq_num, ttl_ms = struct.unpack_from(">III", data, offset)
    offset += 12
    (count,) = struct.unpack_from(">H", data, offset)
    offset += 2
    dataset = []
    for _ in range(count):
        path = None
        for expected in (TLV_PATH, TLV_VALUE):
            if offset + 3 > len(data):
                raise MmsDecodeError("truncated dataset TLV")
            t, l = struct.unpack_from(">BH", data, offset)
            offset += 3
            if t != expected or offset + l > len(data):
                raise MmsDecodeError("malformed dataset entry")
            v = data[offset:offset + l]
            offset += l
            if expected == TLV_PATH:
                path = v.decode("utf-8")
            else:
                dataset.append((path, decode_value(v)))
    if offset != len(data):
        raise MmsDecodeError("trailing bytes after dataset")
    return GooseMessage(publisher_id, st_num, sq_num, ttl_ms, tuple(dataset))
