"""Virtual field devices: object models, wire codecs, IED/PLC/AMI runtimes."""

from gridtwin.device.mmswire import (
    MmsDecodeError,
    MmsMessage,
    MSG_ERROR,
    MSG_READ_REQ,
    MSG_READ_RESP,
    MSG_REPORT,
    MSG_WRITE_REQ,
    MSG_WRITE_RESP,
    decode_frame,
    encode_frame,
    replace_value,
    try_decode,
)
from gridtwin.device.goose import GooseMessage, decode_goose, encode_goose
from gridtwin.device.objects import (
    DataObject,
    DeviceConfig,
    ObjectTable,
    RosterError,
    default_roster,
    default_roster_doc,
    load_roster,
)
from gridtwin.device.runtime import Device, GOOSE_GROUP, GOOSE_PORT, MmsClient, build_devices

__all__ = [
    "DataObject",
    "Device",
    "DeviceConfig",
    "GOOSE_GROUP",
    "GOOSE_PORT",
    "GooseMessage",
    "MmsClient",
    "MmsDecodeError",
    "MmsMessage",
    "MSG_ERROR",
    "MSG_READ_REQ",
    "MSG_READ_RESP",
    "MSG_REPORT",
    "MSG_WRITE_REQ",
    "MSG_WRITE_RESP",
    "ObjectTable",
    "RosterError",
    "build_devices",
    "decode_frame",
    "default_roster",
    "default_roster_doc",
    "decode_goose",
    "encode_frame",
    "encode_goose",
    "load_roster",
    "replace_value",
    "try_decode",
]
