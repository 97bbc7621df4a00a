"""Capture export in pcap format.

Fabric frames are application-level messages, so the exporter synthesizes
IPv4 + UDP headers around each payload (linktype 228, LINKTYPE_IPV4).  The
result opens in standard trace tooling.
"""

from __future__ import annotations

import struct
from typing import Iterable

from gridtwin.vnet.fabric import CaptureRecord

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_IPV4 = 228


def _ip_checksum(header: bytes) -> int:
    total = 0
    for i in range(0, len(header), 2):
        total += (header[i] << 8) + header[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _ipv4_udp(rec: CaptureRecord) -> bytes:
    payload = rec.payload
    udp_len = 8 + len(payload)
    total_len = 20 + udp_len
    src = bytes(int(x) for x in rec.src_ip.split("."))
    dst = bytes(int(x) for x in rec.dst_ip.split("."))
    ip = struct.pack(">BBHHHBBH4s4s",
                     0x45, 0, total_len, 0, 0, 64, 17, 0, src, dst)
    ip = ip[:10] + struct.pack(">H", _ip_checksum(ip)) + ip[12:]
    udp = struct.pack(">HHHH", rec.src_port, rec.dst_port, udp_len, 0)
    return ip + udp + payload


def write_pcap(path: str, records: Iterable[CaptureRecord]) -> int:
    """Write records to ``path``; returns the number of packets written."""
    count = 0
    with open(path, "wb") as fh:
        # little-endian file headers (the common libpcap byte order);
        # packet bytes themselves are network order
        fh.write(struct.pack("<IHHiIII", PCAP_MAGIC, 2, 4, 0, 0, 65535, LINKTYPE_IPV4))
        for rec in records:
            packet = _ipv4_udp(rec)
            ts_s = int(rec.ts_ms // 1000)
            ts_us = int((rec.ts_ms - ts_s * 1000) * 1000)
            fh.write(struct.pack("<IIII", ts_s, ts_us, len(packet), len(packet)))
            fh.write(packet)
            count += 1
    return count
