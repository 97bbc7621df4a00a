"""Wire codec for the device read/write protocol.

Frame layout (all integers big-endian):

    magic 0xE9 0x1C | version 0x01 | msg_type | u32 body length | body

msg_type: 0x01 ReadReq, 0x02 ReadResp, 0x03 WriteReq, 0x04 WriteResp,
0x05 Report, 0x7F Error.

The body is a sequence of TLV fields, each ``T (1 byte) | L (u16) | V``:

    0x01 path       UTF-8 object path
    0x02 value      1 type-tag byte {0 bool, 1 f64, 2 i64, 3 utf8} + payload
    0x03 quality    1 byte {0 good, 1 stale, 2 invalid}
    0x04 timestamp  u64 milliseconds

Error frames carry the reason as a utf8 value ("NotFound", "AccessDenied",
"TypeError", "Malformed").  See docs/mms-wire.md for the full layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"\xe9\x1c"
VERSION = 0x01
HEADER = struct.Struct(">2sBBI")

MSG_READ_REQ = 0x01
MSG_READ_RESP = 0x02
MSG_WRITE_REQ = 0x03
MSG_WRITE_RESP = 0x04
MSG_REPORT = 0x05
MSG_ERROR = 0x7F
MSG_TYPES = {MSG_READ_REQ, MSG_READ_RESP, MSG_WRITE_REQ, MSG_WRITE_RESP, MSG_REPORT, MSG_ERROR}

MSG_NAMES = {
    MSG_READ_REQ: "ReadReq",
    MSG_READ_RESP: "ReadResp",
    MSG_WRITE_REQ: "WriteReq",
    MSG_WRITE_RESP: "WriteResp",
    MSG_REPORT: "Report",
    MSG_ERROR: "Error",
}
MSG_BY_NAME = {v: k for k, v in MSG_NAMES.items()}

TLV_PATH = 0x01
TLV_VALUE = 0x02
TLV_QUALITY = 0x03
TLV_TIMESTAMP = 0x04

TAG_BOOL = 0
TAG_F64 = 1
TAG_I64 = 2
TAG_UTF8 = 3

QUALITY_NAMES = {0: "good", 1: "stale", 2: "invalid"}
QUALITY_CODES = {v: k for k, v in QUALITY_NAMES.items()}

Value = bool | float | int | str


class MmsDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class MmsMessage:
    msg_type: int
    path: str | None = None
    value: Value | None = None
    quality: str | None = None
    timestamp_ms: int | None = None

    @property
    def type_name(self) -> str:
        return MSG_NAMES.get(self.msg_type, f"0x{self.msg_type:02x}")


def encode_value(value: Value) -> bytes:
    if isinstance(value, bool):
        return bytes([TAG_BOOL, 1 if value else 0])
    if isinstance(value, float):
        return bytes([TAG_F64]) + struct.pack(">d", value)
    if isinstance(value, int):
        return bytes([TAG_I64]) + struct.pack(">q", value)
    if isinstance(value, str):
        return bytes([TAG_UTF8]) + value.encode("utf-8")
    raise TypeError(f"unsupported value type {type(value).__name__}")


def decode_value(data: bytes) -> Value:
    if not data:
        raise MmsDecodeError("empty value field")
    tag, payload = data[0], data[1:]
    if tag == TAG_BOOL:
        if len(payload) != 1 or payload[0] not in (0, 1):
            raise MmsDecodeError("bad bool payload")
        return payload[0] == 1
    if tag == TAG_F64:
        if len(payload) != 8:
            raise MmsDecodeError("bad f64 payload")
        return struct.unpack(">d", payload)[0]
    if tag == TAG_I64:
        if len(payload) != 8:
            raise MmsDecodeError("bad i64 payload")
        return struct.unpack(">q", payload)[0]
    if tag == TAG_UTF8:
        try:
            return payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MmsDecodeError(f"bad utf8 payload: {exc}") from exc
    raise MmsDecodeError(f"unknown value type tag {tag}")


def _tlv(t: int, v: bytes) -> bytes:
    if len(v) > 0xFFFF:
        raise ValueError("TLV value too long")
    return struct.pack(">BH", t, len(v)) + v


def encode_frame(
    msg_type: int,
    path: str | None = None,
    value: Value | None = None,
    quality: str | None = None,
    timestamp_ms: int | None = None,
) -> bytes:
    if msg_type not in MSG_TYPES:
        raise ValueError(f"unknown msg_type 0x{msg_type:02x}")
    body = b""
    if path is not None:
        body += _tlv(TLV_PATH, path.encode("utf-8"))
    if value is not None:
        body += _tlv(TLV_VALUE, encode_value(value))
    if quality is not None:
        body += _tlv(TLV_QUALITY, bytes([QUALITY_CODES[quality]]))
    if timestamp_ms is not None:
        body += _tlv(TLV_TIMESTAMP, struct.pack(">Q", int(timestamp_ms)))
    return HEADER.pack(MAGIC, VERSION, msg_type, len(body)) + body


def decode_frame(data: bytes) -> MmsMessage:
    if len(data) < HEADER.size:
        raise MmsDecodeError("frame shorter than header")
    magic, version, msg_type, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MmsDecodeError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MmsDecodeError(f"unsupported version {version}")
    if msg_type not in MSG_TYPES:
        raise MmsDecodeError(f"unknown msg_type 0x{msg_type:02x}")
    body = data[HEADER.size:]
    if len(body) != length:
        raise MmsDecodeError(f"length field {length} != body {len(body)}")
    path = value = quality = timestamp = None
    offset = 0
    while offset < len(body):
        if offset + 3 > len(body):
            raise MmsDecodeError("truncated TLV header")
        t, l = struct.unpack_from(">BH", body, offset)
        offset += 3
        if offset + l > len(body):
            raise MmsDecodeError("truncated TLV value")
        v = body[offset:offset + l]
        offset += l
        if t == TLV_PATH:
            path = v.decode("utf-8")
        elif t == TLV_VALUE:
            value = decode_value(v)
        elif t == TLV_QUALITY:
            if len(v) != 1 or v[0] not in QUALITY_NAMES:
                raise MmsDecodeError("bad quality field")
            quality = QUALITY_NAMES[v[0]]
        elif t == TLV_TIMESTAMP:
            if len(v) != 8:
                raise MmsDecodeError("bad timestamp field")
            timestamp = struct.unpack(">Q", v)[0]
        else:
            raise MmsDecodeError(f"unknown TLV type 0x{t:02x}")
    return MmsMessage(msg_type=msg_type, path=path, value=value,
                      quality=quality, timestamp_ms=timestamp)


def try_decode(data: bytes) -> MmsMessage | None:
    """Parse if possible; None for frames that are not this protocol."""
    try:
        return decode_frame(data)
    except MmsDecodeError:
        return None


def replace_value(frame: bytes, new_value: Value) -> bytes:
    """Re-encode a frame with only its value field replaced.

    Path, quality and timestamp are carried over unchanged; the length
    field is recomputed so the result always re-parses.
    """
    msg = decode_frame(frame)
    return encode_frame(
        msg.msg_type,
        path=msg.path,
        value=new_value,
        quality=msg.quality,
        timestamp_ms=msg.timestamp_ms,
    )
