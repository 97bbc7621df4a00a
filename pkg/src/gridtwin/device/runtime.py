"""Virtual device runtime: IEDs, PLCs and meters.

Each device bridges two worlds (the dual-interface design):

* bus side: subscribes to its objects' source topics and mirrors the
  published process values into the object table;
* network side: serves the TLV read/write protocol on its fabric endpoint,
  and (IEDs) multicasts event datagrams when a status object changes.

PLCs additionally poll their zone's IEDs every poll interval, mirroring the
polled objects under ``<plc>/<ied>.<node>.<attr>`` paths, and translate
control writes into actuator commands on ``epic/cmd/<target>``.
"""

from __future__ import annotations

import itertools
import json
import logging
from typing import Callable

from gridtwin.databus.client import LocalBusClient
from gridtwin.device import goose as goosewire
from gridtwin.device import mmswire
from gridtwin.device.objects import (
    DataObject,
    DeviceConfig,
    ObjectTable,
    PYTHON_TYPES,
)
from gridtwin.runtime import Engine

logger = logging.getLogger(__name__)

GOOSE_GROUP = "239.192.0.1"
GOOSE_PORT = 20000

DEFAULT_POLL_MS = 1000.0
POLL_TIMEOUT_MS = 500.0
STALE_AFTER_TICKS = 3


class Device:
    """One IED/PLC/AMI runtime sharing the twin's engine and fabric."""

    def __init__(self, cfg: DeviceConfig, fabric, broker, engine: Engine,
                 tick_ms: float = 100.0, poll_ms: float = DEFAULT_POLL_MS,
                 wiretap: bool = False):
        self.cfg = cfg
        self.device_id = cfg.device_id
        self.fabric = fabric
        self.engine = engine
        self.tick_ms = float(tick_ms)
        self.poll_ms = float(poll_ms)
        self.wiretap = wiretap
        self.table = ObjectTable(cfg.objects)
        self.endpoint = None
        self._broker = broker
        self._bus = LocalBusClient(broker, cfg.device_id, self._on_bus_message)
        self._topic_objects: dict[str, list[DataObject]] = {}
        for obj in self.table:
            if obj.source_topic:
                self._topic_objects.setdefault(obj.source_topic, []).append(obj)
        self._cmd_seq = itertools.count(1)
        # event burst state (IED)
        self._st_num = 0
        self._sq_num = 0
        self._burst_timer = None
        self._burst_stage = 0
        self.goose_seen: dict[str, tuple[int, int]] = {}  # publisher -> (st, sq)
        self._goose_expiry: dict[str, float] = {}         # publisher -> ttl deadline
        # PLC poll state
        self._poll_timer = None
        self._pending_polls: dict[str, "PendingRequest"] = {}
        self._ied_addr: dict[str, tuple[str, int]] = {}
        self._ied_alive: dict[str, bool] = {}
        self._known_remote_paths: dict[str, list[str]] = {}

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def start(self, roster: dict[str, DeviceConfig] | None = None) -> None:
        try:
            self.endpoint = self.fabric.attach(
                self.cfg.ip, self.cfg.port, self._on_frame)
        except ValueError as exc:
            raise type(exc)(f"{self.device_id}: {exc}") from exc
        if self._bus.closed:      # restarting after stop(): fresh bus session
            self._bus = LocalBusClient(self._broker, self.device_id,
                                       self._on_bus_message)
        for topic in self._topic_objects:
            self._bus.subscribe(topic)
        if self.cfg.kind == "IED" and self.cfg.goose:
            self.fabric.join_group(self.endpoint, GOOSE_GROUP, GOOSE_PORT)
            # announce initial state, then heartbeat until the first change
            self._st_num = 1
            self._burst_stage = len(goosewire.BURST_GAPS_MS)
            self._emit_goose()
        if self.cfg.kind == "PLC" and self.cfg.polled_ieds:
            if roster is None:
                raise ValueError(f"{self.device_id}: PLC start needs the roster for addresses")
            for ied in self.cfg.polled_ieds:
                self._ied_addr[ied] = (roster[ied].ip, roster[ied].port)
                self._ied_alive[ied] = True
            self._poll_timer = self.engine.call_after(self.poll_ms, self._poll_cycle)

    def stop(self) -> None:
        if self._poll_timer is not None:
            self._poll_timer.cancel()
        if self._burst_timer is not None:
            self._burst_timer.cancel()
        if self.endpoint is not None:
            self.fabric.detach(self.endpoint)
        self._bus.close()

    # ------------------------------------------------------------------
    # bus side
    # ------------------------------------------------------------------

    def _on_bus_message(self, topic: str, payload: bytes) -> None:
        objs = self._topic_objects.get(topic)
        if not objs:
            return
        now = self.engine.now_ms()
        for obj in objs:
            try:
                value = obj.parse_payload(payload)
            except ValueError as exc:
                logger.warning("%s: bad payload on %s: %s", self.device_id, topic, exc)
                obj.quality = "invalid"
                continue
            changed = value != obj.value
            obj.value = value
            obj.quality = "good"
            obj.updated_ts = now
            if changed and obj.kind == "status" and self.cfg.kind == "IED" and self.cfg.goose:
                self._state_changed()

    def _effective_quality(self, obj: DataObject) -> str:
        """Staleness rule: source silent for more than 3 ticks."""
        if obj.source_topic is None or obj.quality == "invalid":
            return obj.quality
        if obj.updated_ts is None:
            return "stale"
        if self.engine.now_ms() - obj.updated_ts > STALE_AFTER_TICKS * self.tick_ms:
            return "stale"
        return obj.quality

    # ------------------------------------------------------------------
    # event bursts (IED)
    # ------------------------------------------------------------------

    def _state_changed(self) -> None:
        self._st_num += 1
        self._sq_num = 0
        self._burst_stage = 0
        if self._burst_timer is not None:
            self._burst_timer.cancel()
        self._emit_goose()

    def _emit_goose(self) -> None:
        dataset = tuple(
            (obj.path, obj.value) for obj in self.table if obj.kind == "status")
        gaps = goosewire.BURST_GAPS_MS
        next_gap = gaps[self._burst_stage] if self._burst_stage < len(gaps) \
            else goosewire.HEARTBEAT_MS
        msg = goosewire.GooseMessage(
            publisher_id=self.device_id,
            st_num=self._st_num,
            sq_num=self._sq_num,
            ttl_ms=int(next_gap * 2),
            dataset=dataset,
        )
        self.fabric.send(self.endpoint, GOOSE_GROUP, GOOSE_PORT,
                         goosewire.encode_goose(msg))
        self._sq_num += 1
        self._burst_stage += 1
        self._burst_timer = self.engine.call_after(next_gap, self._emit_goose)

    def _on_goose(self, frame) -> None:
        try:
            msg = goosewire.decode_goose(frame.payload)
        except mmswire.MmsDecodeError as exc:
            logger.warning("%s: bad event datagram: %s", self.device_id, exc)
            return
        now = self.engine.now_ms()
        last = self.goose_seen.get(msg.publisher_id)
        # counters only bind while the last announcement's ttl holds; after
        # that the publisher may have rebooted and restarted at st_num 1
        if (last is not None and (msg.st_num, msg.sq_num) <= last
                and now <= self._goose_expiry.get(msg.publisher_id, 0.0)):
            logger.warning("%s: out-of-order event from %s: %s <= %s",
                           self.device_id, msg.publisher_id,
                           (msg.st_num, msg.sq_num), last)
            return
        self.goose_seen[msg.publisher_id] = (msg.st_num, msg.sq_num)
        self._goose_expiry[msg.publisher_id] = now + msg.ttl_ms

    # ------------------------------------------------------------------
    # protocol server
    # ------------------------------------------------------------------

    def _reply(self, frame, response: bytes) -> None:
        if self.wiretap:
            self._bus.publish(f"epic/wiretap/{self.device_id}/out", response)
        self.fabric.send(self.endpoint, frame.src_ip, frame.src_port, response)

    def _on_frame(self, frame) -> None:
        if frame.dst_ip == GOOSE_GROUP:
            self._on_goose(frame)
            return
        if self.wiretap:
            self._bus.publish(f"epic/wiretap/{self.device_id}/in", frame.payload)
        msg = mmswire.try_decode(frame.payload)
        if msg is None:
            self._reply(frame, mmswire.encode_frame(
                mmswire.MSG_ERROR, value="Malformed"))
            return
        if msg.msg_type == mmswire.MSG_READ_REQ:
            self._handle_read(frame, msg)
        elif msg.msg_type == mmswire.MSG_WRITE_REQ:
            self._handle_write(frame, msg)
        elif msg.msg_type in (mmswire.MSG_READ_RESP, mmswire.MSG_WRITE_RESP,
                              mmswire.MSG_ERROR, mmswire.MSG_REPORT):
            self._handle_response(frame, msg)

    def _handle_read(self, frame, msg: mmswire.MmsMessage) -> None:
        obj = self.table.get(msg.path) if msg.path else None
        if obj is None:
            self._reply(frame, mmswire.encode_frame(
                mmswire.MSG_ERROR, path=msg.path, value="NotFound"))
            return
        self._reply(frame, mmswire.encode_frame(
            mmswire.MSG_READ_RESP,
            path=obj.path,
            value=obj.value,
            quality=self._effective_quality(obj),
            timestamp_ms=int(obj.updated_ts if obj.updated_ts is not None
                             else self.engine.now_ms()),
        ))

    def _handle_write(self, frame, msg: mmswire.MmsMessage) -> None:
        obj = self.table.get(msg.path) if msg.path else None
        if obj is None:
            self._reply(frame, mmswire.encode_frame(
                mmswire.MSG_ERROR, path=msg.path, value="NotFound"))
            return
        if not obj.writable:
            self._reply(frame, mmswire.encode_frame(
                mmswire.MSG_ERROR, path=msg.path, value="AccessDenied"))
            return
        expected = PYTHON_TYPES[obj.value_type]
        if type(msg.value) is not expected:
            self._reply(frame, mmswire.encode_frame(
                mmswire.MSG_ERROR, path=msg.path, value="TypeError"))
            return
        obj.value = msg.value
        obj.quality = "good"
        obj.updated_ts = self.engine.now_ms()
        if obj.kind == "control" and obj.target is not None:
            self._publish_command(obj, msg.value)
        self._reply(frame, mmswire.encode_frame(
            mmswire.MSG_WRITE_RESP,
            path=obj.path,
            value=msg.value,
            quality="good",
            timestamp_ms=int(obj.updated_ts),
        ))

    def _publish_command(self, obj: DataObject, value) -> None:
        if obj.value_type == "boolean":
            body = {"action": "close" if value else "open"}
        else:
            body = {"action": "set_percent", "value": int(value)}
        body["origin"] = self.device_id
        body["seq"] = next(self._cmd_seq)
        self._bus.publish(f"epic/cmd/{obj.target}", json.dumps(body).encode())

    # ------------------------------------------------------------------
    # PLC polling
    # ------------------------------------------------------------------

    def _poll_cycle(self) -> None:
        for ied, (ip, port) in self._ied_addr.items():
            pending = PendingRequest(ied, self.engine.now_ms())
            self._pending_polls[ied] = pending
            pending.timeout = self.engine.call_after(
                POLL_TIMEOUT_MS, self._poll_timed_out, ied, pending)
            # the directory read: ask for every known remote path
            for path in self._poll_paths(ied):
                pending.outstanding.add(path)
                self.fabric.send(self.endpoint, ip, port,
                                 mmswire.encode_frame(mmswire.MSG_READ_REQ, path=path))
            if not pending.outstanding:
                pending.timeout.cancel()
        self._poll_timer = self.engine.call_after(self.poll_ms, self._poll_cycle)

    def _poll_paths(self, ied: str) -> list[str]:
        return self._known_remote_paths.get(ied, [])

    def set_polled_paths(self, mapping: dict[str, list[str]]) -> None:
        """Configure which remote paths each polled IED exposes."""
        self._known_remote_paths = mapping

    def _mirror_path(self, ied: str, remote_path: str) -> str:
        suffix = remote_path.split("/", 1)[1]
        return f"{self.device_id}/{ied}.{suffix}"

    def _handle_response(self, frame, msg: mmswire.MmsMessage) -> None:
        # match against an open poll by source address
        for ied, (ip, port) in self._ied_addr.items():
            if frame.src_ip == ip and frame.src_port == port:
                pending = self._pending_polls.get(ied)
                if pending is None or msg.path not in pending.outstanding:
                    return
                pending.outstanding.discard(msg.path)
                if msg.msg_type == mmswire.MSG_READ_RESP:
                    self._update_mirror(ied, msg)
                if not pending.outstanding:
                    pending.timeout.cancel()
                    self._ied_alive[ied] = True
                    del self._pending_polls[ied]
                return
        logger.debug("%s: unmatched response from %s", self.device_id, frame.src_ip)

    def _update_mirror(self, ied: str, msg: mmswire.MmsMessage) -> None:
        path = self._mirror_path(ied, msg.path)
        obj = self.table.get(path)
        if obj is None:
            value_type = {bool: "boolean", float: "float64", int: "int64",
                          str: "utf8"}[type(msg.value)]
            obj = DataObject(path=path, kind="measurement", value_type=value_type,
                             mirror_of=ied)
            self.table.add(obj)
        obj.value = msg.value
        obj.quality = msg.quality or "good"
        obj.updated_ts = self.engine.now_ms()

    def _poll_timed_out(self, ied: str, pending: "PendingRequest") -> None:
        if self._pending_polls.get(ied) is not pending:
            return
        del self._pending_polls[ied]
        self._ied_alive[ied] = False
        for obj in self.table:
            if obj.mirror_of == ied:
                obj.quality = "invalid"
        logger.warning("%s: poll of %s timed out; mirrors marked invalid",
                       self.device_id, ied)


class PendingRequest:
    def __init__(self, ied: str, started_ms: float):
        self.ied = ied
        self.started_ms = started_ms
        self.outstanding: set[str] = set()
        self.timeout = None


class MmsClient:
    """Protocol client: one fabric endpoint, callback-style requests."""

    def __init__(self, fabric, engine: Engine, ip: str, port: int,
                 switch_id: str | None = None):
        self.fabric = fabric
        self.engine = engine
        self.endpoint = fabric.attach(ip, port, self._on_frame, switch_id=switch_id)
        self._pending: dict[tuple[str, int], tuple[Callable, object]] = {}

    def close(self) -> None:
        self.fabric.detach(self.endpoint)

    def request(self, dst_ip: str, dst_port: int, frame_bytes: bytes,
                callback: Callable[[mmswire.MmsMessage | None], None],
                timeout_ms: float = 1000.0) -> None:
        """Send a request; exactly one callback with the response or None.

        One outstanding request per destination device (the 1:1 session
        discipline); a second concurrent request to the same device fails
        fast with ValueError.
        """
        key = (dst_ip, int(dst_port))
        if key in self._pending:
            raise ValueError(f"request already outstanding to {dst_ip}:{dst_port}")
        timer = self.engine.call_after(timeout_ms, self._timed_out, key)
        self._pending[key] = (callback, timer)
        outcome = self.fabric.send(self.endpoint, dst_ip, dst_port, frame_bytes)
        if outcome == "unreachable":
            timer.cancel()
            del self._pending[key]
            self.engine.call_soon(callback, None)

    def read(self, dst_ip: str, dst_port: int, path: str,
             callback: Callable[[mmswire.MmsMessage | None], None],
             timeout_ms: float = 1000.0) -> None:
        self.request(dst_ip, dst_port,
                     mmswire.encode_frame(mmswire.MSG_READ_REQ, path=path),
                     callback, timeout_ms)

    def write(self, dst_ip: str, dst_port: int, path: str, value,
              callback: Callable[[mmswire.MmsMessage | None], None],
              timeout_ms: float = 1000.0) -> None:
        self.request(dst_ip, dst_port,
                     mmswire.encode_frame(mmswire.MSG_WRITE_REQ, path=path, value=value),
                     callback, timeout_ms)

    def _on_frame(self, frame) -> None:
        key = (frame.src_ip, frame.src_port)
        entry = self._pending.pop(key, None)
        if entry is None:
            return
        callback, timer = entry
        timer.cancel()
        callback(mmswire.try_decode(frame.payload))

    def _timed_out(self, key) -> None:
        entry = self._pending.pop(key, None)
        if entry is None:
            return
        callback, _ = entry
        callback(None)


def build_devices(configs: list[DeviceConfig], fabric, broker, engine: Engine,
                  tick_ms: float = 100.0, poll_ms: float = DEFAULT_POLL_MS,
                  wiretap: bool = False) -> dict[str, Device]:
    """Instantiate and start every device in the roster."""
    by_id = {c.device_id: c for c in configs}
    devices: dict[str, Device] = {}
    for cfg in configs:
        devices[cfg.device_id] = Device(cfg, fabric, broker, engine,
                                        tick_ms=tick_ms, poll_ms=poll_ms,
                                        wiretap=wiretap)
    # PLCs poll every object their IEDs declare
    for device in devices.values():
        if device.cfg.kind == "PLC":
            device.set_polled_paths({
                ied: [o.path for o in by_id[ied].objects]
                for ied in device.cfg.polled_ieds
            })
    for device in devices.values():
        device.start(roster=by_id)
    return devices
