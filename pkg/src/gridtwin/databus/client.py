"""Bus client interfaces: in-process attach and a minimal MQTT/TCP client."""

from __future__ import annotations

import socket
import struct
import threading
from typing import Callable

from . import packets
from .broker import Broker

OnMessage = Callable[[str, bytes], None]


class LocalBusClient:
    """Direct in-process attachment to a :class:`Broker`."""

    def __init__(self, broker: Broker, client_id: str, on_message: OnMessage | None = None):
        self.broker = broker
        self.client_id = client_id
        self.closed = False
        self._session = broker.connect_local(client_id, on_message or (lambda t, p: None))

    def publish(self, topic: str, payload: bytes | str) -> None:
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        self.broker.publish(self._session, topic, payload)

    def subscribe(self, filt: str) -> bool:
        return self.broker.subscribe(self._session, filt)

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        self.broker.disconnect(self._session)


class MqttClient:
    """Thin MQTT v3.1.1 QoS-0 client for attaching over TCP."""

    def __init__(self, host: str, port: int, client_id: str,
                 on_message: OnMessage | None = None, keepalive_s: int = 60):
        self.client_id = client_id
        self.on_message = on_message or (lambda t, p: None)
        self._sock = socket.create_connection((host, port), timeout=10.0)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._write_lock = threading.Lock()
        self._suback: dict[int, threading.Event] = {}
        self._suback_codes: dict[int, list[int]] = {}
        self._packet_id = 0
        self._connected = threading.Event()
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._send(packets.encode_connect(client_id, keepalive_s))
        self._reader.start()
        if not self._connected.wait(timeout=10.0):
            self.close()
            raise ConnectionError("no CONNACK from broker")

    def _send(self, frame: bytes) -> None:
        with self._write_lock:
            self._sock.sendall(frame)

    def publish(self, topic: str, payload: bytes | str) -> None:
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        self._send(packets.encode_publish(topic, payload))

    def subscribe(self, filt: str, timeout: float = 10.0) -> bool:
        self._packet_id = self._packet_id % 65535 + 1
        pid = self._packet_id
        done = threading.Event()
        self._suback[pid] = done
        self._send(packets.encode_subscribe(pid, [filt]))
        if not done.wait(timeout):
            self._suback.pop(pid, None)
            raise TimeoutError(f"no SUBACK for {filt!r}")
        codes = self._suback_codes.pop(pid, [packets.SUBACK_FAILURE])
        return codes[0] != packets.SUBACK_FAILURE

    def ping(self) -> None:
        self._send(packets.encode_pingreq())

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._send(packets.encode_disconnect())
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass

    def _read_loop(self) -> None:
        def read_exactly(n: int) -> bytes:
            buf = b""
            while len(buf) < n:
                chunk = self._sock.recv(n - len(buf))
                if not chunk:
                    raise ConnectionError("broker closed connection")
                buf += chunk
            return buf

        try:
            while True:
                ptype, flags, body = packets.read_packet(read_exactly)
                if ptype == packets.CONNACK:
                    if packets.decode_connack(body) == 0:
                        self._connected.set()
                    else:
                        self.close()
                        return
                elif ptype == packets.PUBLISH:
                    topic, payload = packets.decode_publish(flags, body)
                    try:
                        self.on_message(topic, payload)
                    except Exception:
                        pass
                elif ptype == packets.SUBACK:
                    pid, codes = packets.decode_suback(body)
                    event = self._suback.pop(pid, None)
                    if event is not None:
                        self._suback_codes[pid] = codes
                        event.set()
                elif ptype == packets.PINGRESP:
                    pass
        except (ConnectionError, OSError, packets.MalformedPacket, struct.error):
            self._closed = True
