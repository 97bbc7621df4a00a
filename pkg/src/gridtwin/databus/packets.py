"""MQTT v3.1.1 packet framing, QoS-0 subset.

Covers CONNECT/CONNACK, SUBSCRIBE/SUBACK, PUBLISH (QoS 0), PINGREQ/PINGRESP
and DISCONNECT with the standard fixed-header layout, so stock MQTT clients
can talk to the broker.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

CONNECT = 1
CONNACK = 2
PUBLISH = 3
SUBSCRIBE = 8
SUBACK = 9
PINGREQ = 12
PINGRESP = 13
DISCONNECT = 14

PROTOCOL_NAME = b"MQTT"
PROTOCOL_LEVEL = 4


class MalformedPacket(ValueError):
    pass


def _encode_string(s: str) -> bytes:
    data = s.encode("utf-8")
    return struct.pack(">H", len(data)) + data


def _decode_string(body: bytes, offset: int) -> tuple[str, int]:
    if offset + 2 > len(body):
        raise MalformedPacket("truncated string length")
    (n,) = struct.unpack_from(">H", body, offset)
    offset += 2
    if offset + n > len(body):
        raise MalformedPacket("truncated string")
    try:
        return body[offset : offset + n].decode("utf-8"), offset + n
    except UnicodeDecodeError as exc:
        raise MalformedPacket("invalid utf-8 string") from exc


def encode_remaining_length(n: int) -> bytes:
    if n < 0 or n > 268_435_455:
        raise MalformedPacket(f"remaining length {n} out of range")
    out = bytearray()
    while True:
        byte = n % 128
        n //= 128
        if n:
            byte |= 0x80
        out.append(byte)
        if not n:
            return bytes(out)


def encode_packet(ptype: int, flags: int, body: bytes) -> bytes:
    return bytes([(ptype << 4) | (flags & 0x0F)]) + encode_remaining_length(len(body)) + body


def read_packet(read_exactly) -> tuple[int, int, bytes]:
    """Read one packet via ``read_exactly(n) -> bytes`` (raises on EOF)."""
    first = read_exactly(1)[0]
    ptype, flags = first >> 4, first & 0x0F
    multiplier, value = 1, 0
    for _ in range(4):
        byte = read_exactly(1)[0]
        value += (byte & 0x7F) * multiplier
        if not byte & 0x80:
            break
        multiplier *= 128
    else:
        raise MalformedPacket("remaining length exceeds 4 bytes")
    body = read_exactly(value) if value else b""
    return ptype, flags, body


# ----------------------------------------------------------------------
# CONNECT / CONNACK
# ----------------------------------------------------------------------


@dataclass
class ConnectInfo:
    client_id: str
    keepalive_s: int
    clean_session: bool


def encode_connect(client_id: str, keepalive_s: int = 60) -> bytes:
    body = (
        _encode_string("MQTT")
        + bytes([PROTOCOL_LEVEL, 0x02])  # clean session, no will/auth
        + struct.pack(">H", keepalive_s)
        + _encode_string(client_id)
    )
    return encode_packet(CONNECT, 0, body)


def decode_connect(body: bytes) -> ConnectInfo:
    name, offset = _decode_string(body, 0)
    if name.encode() != PROTOCOL_NAME:
        raise MalformedPacket(f"bad protocol name {name!r}")
    if offset + 4 > len(body):
        raise MalformedPacket("truncated connect header")
    level = body[offset]
    if level != PROTOCOL_LEVEL:
        raise MalformedPacket(f"unsupported protocol level {level}")
    connect_flags = body[offset + 1]
    (keepalive,) = struct.unpack_from(">H", body, offset + 2)
    client_id, _ = _decode_string(body, offset + 4)
    if not client_id:
        raise MalformedPacket("empty client id")
    return ConnectInfo(client_id, keepalive, bool(connect_flags & 0x02))


def encode_connack(return_code: int = 0, session_present: bool = False) -> bytes:
    return encode_packet(CONNACK, 0, bytes([int(session_present), return_code]))


def decode_connack(body: bytes) -> int:
    if len(body) != 2:
        raise MalformedPacket("bad connack body")
    return body[1]


# ----------------------------------------------------------------------
# PUBLISH (QoS 0 only)
# ----------------------------------------------------------------------


def encode_publish(topic: str, payload: bytes) -> bytes:
    return encode_packet(PUBLISH, 0, _encode_string(topic) + payload)


def decode_publish(flags: int, body: bytes) -> tuple[str, bytes]:
    qos = (flags >> 1) & 0x03
    if qos != 0:
        raise MalformedPacket(f"QoS {qos} not supported")
    topic, offset = _decode_string(body, 0)
    return topic, body[offset:]


# ----------------------------------------------------------------------
# SUBSCRIBE / SUBACK
# ----------------------------------------------------------------------


def encode_subscribe(packet_id: int, filters: list[str]) -> bytes:
    body = struct.pack(">H", packet_id)
    for filt in filters:
        body += _encode_string(filt) + b"\x00"
    return encode_packet(SUBSCRIBE, 0x02, body)


def decode_subscribe(flags: int, body: bytes) -> tuple[int, list[str]]:
    if flags != 0x02:
        raise MalformedPacket("subscribe flags must be 0010")
    if len(body) < 2:
        raise MalformedPacket("truncated subscribe")
    (packet_id,) = struct.unpack_from(">H", body, 0)
    offset, filters = 2, []
    while offset < len(body):
        filt, offset = _decode_string(body, offset)
        if offset >= len(body):
            raise MalformedPacket("missing requested QoS byte")
        offset += 1  # requested QoS, always granted as 0
        filters.append(filt)
    if not filters:
        raise MalformedPacket("subscribe with no filters")
    return packet_id, filters


SUBACK_FAILURE = 0x80


def encode_suback(packet_id: int, return_codes: list[int]) -> bytes:
    return encode_packet(SUBACK, 0, struct.pack(">H", packet_id) + bytes(return_codes))


def decode_suback(body: bytes) -> tuple[int, list[int]]:
    if len(body) < 3:
        raise MalformedPacket("truncated suback")
    (packet_id,) = struct.unpack_from(">H", body, 0)
    return packet_id, list(body[2:])


def encode_pingreq() -> bytes:
    return encode_packet(PINGREQ, 0, b"")


def encode_pingresp() -> bytes:
    return encode_packet(PINGRESP, 0, b"")


def encode_disconnect() -> bytes:
    return encode_packet(DISCONNECT, 0, b"")
