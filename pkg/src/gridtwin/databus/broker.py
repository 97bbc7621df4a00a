"""Topic pub/sub broker standing in for the twin's physical wiring.

QoS 0, no retain, no persistence: the bus carries continuously refreshed
process values, so a lost sample is superseded by the next tick anyway.
In-process clients attach through ``connect_local``; the optional TCP
listener speaks the MQTT v3.1.1 subset in :mod:`gridtwin.databus.packets`
so external tools can attach unchanged.
"""

from __future__ import annotations

import logging
import os
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from ..runtime import Engine
from . import packets
from .topics import TopicError, filter_is_valid, topic_matches, validate_publish_topic

logger = logging.getLogger(__name__)

MAX_PAYLOAD = 64 * 1024
DEFAULT_PORT = 18830
ERROR_TOPIC = "$SYS/broker/error"


class BusError(Exception):
    pass


@dataclass
class BrokerStats:
    sessions: int
    messages_in: int
    messages_out: int
    max_delivery_latency_ms: float


class Session:
    """One connected client: id, subscription filters, a transport."""

    def __init__(self, client_id: str):
        self.client_id = client_id
        self.filters: list[str] = []
        self.closed = False

    def matches(self, topic: str) -> bool:
        return any(topic_matches(f, topic) for f in self.filters)

    def deliver(self, topic: str, payload: bytes, publish_ts: float) -> None:
        raise NotImplementedError

    def close(self) -> None:
        self.closed = True


class LocalSession(Session):
    """In-process subscriber; messages are dispatched as engine events."""

    def __init__(self, client_id: str, on_message: Callable[[str, bytes], None]):
        super().__init__(client_id)
        self.on_message = on_message


class TcpSession(Session):
    """Remote MQTT client with a bounded outbound queue and writer thread.

    A full queue means the consumer cannot keep up; the session is dropped
    so it never backpressures the publishing loop.
    """

    def __init__(self, client_id: str, sock: socket.socket, broker: "Broker"):
        super().__init__(client_id)
        self.sock = sock
        self.broker = broker
        self.outbound: queue.Queue = queue.Queue(maxsize=broker.queue_limit)
        self.writer = threading.Thread(target=self._write_loop, daemon=True)
        self.writer.start()

    def send_frame(self, frame: bytes) -> None:
        try:
            self.outbound.put_nowait((frame, None))
        except queue.Full:
            logger.warning("slow consumer %s: outbound queue full, disconnecting", self.client_id)
            self.close()

    def deliver(self, topic: str, payload: bytes, publish_ts: float) -> None:
        frame = packets.encode_publish(topic, payload)
        try:
            self.outbound.put_nowait((frame, time.monotonic()))
        except queue.Full:
            logger.warning("slow consumer %s: outbound queue full, disconnecting", self.client_id)
            self.close()

    def _write_loop(self) -> None:
        while True:
            item = self.outbound.get()
            if item is None:
                return
            frame, enq_ts = item
            try:
                self.sock.sendall(frame)
            except OSError:
                self.close()
                return
            if enq_ts is not None:
                self.broker._note_latency((time.monotonic() - enq_ts) * 1000.0)

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self.outbound.put_nowait(None)
        except queue.Full:
            pass
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class Broker:
    """Routes publishes to matching live subscribers, at most once each."""

    def __init__(self, engine: Optional[Engine] = None, queue_limit: int = 1024,
                 max_payload: int = MAX_PAYLOAD):
        self.engine = engine
        self.queue_limit = queue_limit
        self.max_payload = max_payload
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._messages_in = 0
        self._messages_out = 0
        self._max_latency_ms = 0.0
        self._server_sock: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None

    # ------------------------------------------------------------------
    # Session management
    # ------------------------------------------------------------------

    def connect_local(self, client_id: str, on_message: Callable[[str, bytes], None]) -> LocalSession:
        session = LocalSession(client_id, on_message)
        self._register(session)
        return session

    def _register(self, session: Session) -> None:
        with self._lock:
            old = self._sessions.get(session.client_id)
            self._sessions[session.client_id] = session
        if old is not None:
            logger.info("client id %s reconnected, evicting previous session", session.client_id)
            old.close()

    def disconnect(self, session: Session) -> None:
        with self._lock:
            if self._sessions.get(session.client_id) is session:
                del self._sessions[session.client_id]
        session.close()

    def subscribe(self, session: Session, filt: str) -> bool:
        """Grant the filter; invalid syntax is refused but keeps the session."""
        if not filter_is_valid(filt):
            return False
        with self._lock:
            if filt not in session.filters:
                session.filters.append(filt)
        return True

    # ------------------------------------------------------------------
    # Publish path
    # ------------------------------------------------------------------

    def publish(self, session: Optional[Session], topic: str, payload: bytes) -> None:
        """Route ``payload`` to every matching live subscriber.

        Raises :class:`BusError` for local publishers on oversize payloads or
        invalid topics; TCP publishers get an error frame instead.
        """
        validate_publish_topic(topic)
        if len(payload) > self.max_payload:
            if isinstance(session, TcpSession):
                session.deliver(ERROR_TOPIC, b"payload too large, message dropped", 0.0)
                return
            raise BusError(f"payload of {len(payload)} bytes exceeds {self.max_payload} limit")
        now = self.engine.now_ms() if self.engine else time.monotonic() * 1000.0
        with self._lock:
            self._messages_in += 1
            targets = [s for s in self._sessions.values() if not s.closed and s.matches(topic)]
            self._messages_out += len(targets)
        for target in targets:
            if isinstance(target, LocalSession):
                if self.engine is not None:
                    self.engine.call_soon(self._deliver_local, target, topic, payload, now)
                else:
                    self._deliver_local(target, topic, payload, now)
            else:
                target.deliver(topic, payload, now)

    def _deliver_local(self, session: LocalSession, topic: str, payload: bytes, publish_ts: float) -> None:
        if session.closed:
            return
        if self.engine is not None:
            self._note_latency(self.engine.now_ms() - publish_ts)
        try:
            session.on_message(topic, payload)
        except Exception:
            logger.exception("subscriber %s raised while handling %s", session.client_id, topic)

    def _note_latency(self, latency_ms: float) -> None:
        with self._lock:
            if latency_ms > self._max_latency_ms:
                self._max_latency_ms = latency_ms

    def stats(self) -> BrokerStats:
        with self._lock:
            return BrokerStats(
                sessions=len(self._sessions),
                messages_in=self._messages_in,
                messages_out=self._messages_out,
                max_delivery_latency_ms=self._max_latency_ms,
            )

    # ------------------------------------------------------------------
    # TCP listener
    # ------------------------------------------------------------------

    def serve(self, port: int | None = None, host: str = "127.0.0.1") -> int:
        """Start the MQTT listener; returns the bound port."""
        if port is None:
            port = int(os.environ.get("GRIDTWIN_BROKER_PORT", DEFAULT_PORT))
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(64)
        self._server_sock = sock
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return sock.getsockname()[1]

    def stop_server(self) -> None:
        if self._server_sock is not None:
            try:
                self._server_sock.close()
            except OSError:
                pass
            self._server_sock = None
        with self._lock:
            sessions = list(self._sessions.values())
            self._sessions.clear()
        for s in sessions:
            s.close()

    def _accept_loop(self) -> None:
        assert self._server_sock is not None
        while True:
            try:
                conn, _addr = self._server_sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket) -> None:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

        def read_exactly(n: int) -> bytes:
            buf = b""
            while len(buf) < n:
                chunk = conn.recv(n - len(buf))
                if not chunk:
                    raise ConnectionError("peer closed")
                buf += chunk
            return buf

        session: TcpSession | None = None
        try:
            ptype, _flags, body = packets.read_packet(read_exactly)
            if ptype != packets.CONNECT:
                raise packets.MalformedPacket("first packet must be CONNECT")
            info = packets.decode_connect(body)
            session = TcpSession(info.client_id, conn, self)
            self._register(session)
            session.send_frame(packets.encode_connack(0))
            while not session.closed:
                ptype, flags, body = packets.read_packet(read_exactly)
                if ptype == packets.PUBLISH:
                    topic, payload = packets.decode_publish(flags, body)
                    self.publish(session, topic, payload)
                elif ptype == packets.SUBSCRIBE:
                    packet_id, filters = packets.decode_subscribe(flags, body)
                    codes = []
                    for filt in filters:
                        codes.append(0 if self.subscribe(session, filt) else packets.SUBACK_FAILURE)
                    session.send_frame(packets.encode_suback(packet_id, codes))
                elif ptype == packets.PINGREQ:
                    session.send_frame(packets.encode_pingresp())
                elif ptype == packets.DISCONNECT:
                    break
                else:
                    raise packets.MalformedPacket(f"unexpected packet type {ptype}")
        except (packets.MalformedPacket, TopicError, ConnectionError, OSError, struct.error) as exc:
            logger.debug("connection dropped: %s", exc)
        finally:
            if session is not None:
                self.disconnect(session)
            else:
                try:
                    conn.close()
                except OSError:
                    pass
