"""Supervisory engine: acquisition polling, operator commands, historian feed.

Acquisition
    Every device in the roster is read once per poll cycle over the
    field protocol.  Reads to one device run as a sequential chain (one
    outstanding request per device); chains for different devices run
    concurrently, so a cycle completes in a couple of round trips.  A
    device's readings land in the tag database atomically when its chain
    finishes.  A device that stops answering keeps its last values; after
    ``STALE_AFTER_MISSES`` consecutive failed cycles its tags are flagged
    stale.

Commands
    Operator writes go out on a dedicated command endpoint, one at a time
    through a queue.  Every accepted write produces exactly one
    :class:`CommandRecord`; its outcome (``acked``/``failed``/``timeout``)
    comes from the device response, and the paired status tag is read back
    from the live database ``READBACK_CYCLES`` poll cycles later into
    ``observed``.

Historian feed
    Tag changes are journalled with per-tag sequence numbers and shipped
    in batches.  While the historian is unreachable the batch stays in a
    bounded retry buffer (oldest dropped beyond ``BUFFER_MAX`` samples)
    and every push retries from the front, so a historian restart resumes
    the per-tag sequence without gaps.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from gridtwin.device.objects import DeviceConfig
from gridtwin.device.runtime import MmsClient
from gridtwin.device import mmswire
from gridtwin.historian.protocol import HistorianClient
from gridtwin.historian.store import HistorianError, TagSample
from gridtwin.runtime import Engine
from gridtwin.scada.tags import ScadaError, Tag, TagDB

logger = logging.getLogger(__name__)

DEFAULT_POLL_MS = 1000.0       # acquisition cadence
REQUEST_TIMEOUT_MS = 400.0     # single read/write round trip budget
STALE_AFTER_MISSES = 3         # failed cycles before tags degrade to stale
READBACK_CYCLES = 2            # command confirmation window, in poll cycles
READBACK_SLACK_MS = 250.0      # lets the readback cycle finish first
BUFFER_MAX = 1_000_000         # historian retry buffer bound (samples)

DEFAULT_IP = "172.18.5.10"     # control-room subnet (CSW attachment)
POLL_PORT = 4840
COMMAND_PORT = 4841


@dataclass
class CommandRecord:
    """Ledger entry for one operator write."""

    cmd_id: int
    tag: str
    value: object
    operator: str
    issued_ts: float
    outcome: Optional[str] = None      # acked | failed | timeout
    resolved_ts: Optional[float] = None
    error: Optional[str] = None        # device refusal text when failed
    status_tag: Optional[str] = None   # paired status read back, if any
    observed: object = None            # that tag's value after the window
    observed_quality: Optional[str] = None
    observed_ts: Optional[float] = None

    def to_json(self) -> dict:
        return {
            "cmd_id": self.cmd_id,
            "tag": self.tag,
            "value": self.value,
            "operator": self.operator,
            "issued_ts": self.issued_ts,
            "outcome": self.outcome,
            "resolved_ts": self.resolved_ts,
            "error": self.error,
            "status_tag": self.status_tag,
            "observed": self.observed,
            "observed_quality": self.observed_quality,
            "observed_ts": self.observed_ts,
        }


@dataclass
class CycleStats:
    """Progress/outcome of one poll cycle."""

    started_ms: float
    devices_total: int
    devices_done: int = 0
    done: bool = False
    duration_ms: Optional[float] = None
    updated: set = field(default_factory=set)   # tag names changed
    missed: set = field(default_factory=set)    # devices that timed out


class ScadaEngine:
    """Polls the roster, owns the tag DB journal, executes writes."""

    def __init__(
        self,
        configs: list[DeviceConfig],
        fabric,
        engine: Engine,
        tagdb: Optional[TagDB] = None,
        *,
        ip: str = DEFAULT_IP,
        poll_ms: float = DEFAULT_POLL_MS,
        historian: Optional[HistorianClient] = None,
        push_ms: Optional[float] = None,
    ):
        self.configs = {c.device_id: c for c in configs}
        self.fabric = fabric
        self.engine = engine
        self.tags = tagdb if tagdb is not None else TagDB()
        self.ip = ip
        self.poll_ms = float(poll_ms)
        self.push_ms = float(push_ms) if push_ms is not None else self.poll_ms
        self.historian = historian

        self.commands: list[CommandRecord] = []
        self.cycles: list[CycleStats] = []
        self._cmd_ids = itertools.count(1)
        self._cmd_queue: deque[tuple[CommandRecord, DeviceConfig, str, object]] = deque()
        self._cmd_inflight = False
        self._misses: dict[str, int] = {c: 0 for c in self.configs}
        self._buffer: deque[TagSample] = deque()
        self._dropped = 0
        self._poll_client: Optional[MmsClient] = None
        self._cmd_client: Optional[MmsClient] = None
        self._cycle_timer = None
        self._push_timer = None
        self._running = False

        # tag per declared object; status tags indexed by actuator for readback
        self._status_by_target: dict[str, str] = {}
        for cfg in configs:
            for obj in cfg.objects:
                self.tags.declare(obj.path, obj.kind, cfg.device_id, cfg.zone)
                if obj.kind == "status" and obj.source_topic:
                    # epic/<zone>/<actuator>/status -> actuator id
                    parts = obj.source_topic.split("/")
                    if len(parts) == 4:
                        self._status_by_target.setdefault(parts[2], obj.path)

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def start(self, auto_poll: bool = True) -> None:
        self._poll_client = MmsClient(self.fabric, self.engine, self.ip, POLL_PORT)
        self._cmd_client = MmsClient(self.fabric, self.engine, self.ip, COMMAND_PORT)
        self._running = True
        if auto_poll:
            self._cycle_timer = self.engine.call_soon(self._scheduled_cycle)
            if self.historian is not None:
                self._push_timer = self.engine.call_after(
                    self.push_ms, self._scheduled_push)
        logger.info("scada polling %d devices every %.0f ms from %s",
                    len(self.configs), self.poll_ms, self.ip)

    def stop(self) -> None:
        self._running = False
        for timer in (self._cycle_timer, self._push_timer):
            if timer is not None:
                timer.cancel()
        self._cycle_timer = self._push_timer = None
        for client in (self._poll_client, self._cmd_client):
            if client is not None:
                client.close()
        self._poll_client = self._cmd_client = None

    # ------------------------------------------------------------------
    # acquisition
    # ------------------------------------------------------------------

    def _scheduled_cycle(self) -> None:
        if not self._running:
            return
        started = self.engine.now_ms()
        self._cycle_timer = self.engine.call_at(
            started + self.poll_ms, self._scheduled_cycle)
        if self.cycles and not self.cycles[-1].done:
            logger.warning("poll cycle overrun at %.0f ms; skipping", started)
            return
        self.poll_cycle()

    def poll_cycle(self) -> CycleStats:
        """Start one acquisition pass over every roster device.

        Returns the live :class:`CycleStats`; it fills in as device chains
        complete (``done`` flips once every device answered or timed out).
        """
        if self._poll_client is None:
            raise RuntimeError("scada engine not started")
        stats = CycleStats(started_ms=self.engine.now_ms(),
                           devices_total=len(self.configs))
        self.cycles.append(stats)
        for cfg in self.configs.values():
            self._read_chain(cfg, [o.path for o in cfg.objects], [], stats)
        return stats

    def _read_chain(self, cfg: DeviceConfig, todo: list[str],
                    got: list[tuple], stats: CycleStats) -> None:
        if not todo:
            self._device_done(cfg, got, stats)
            return
        path, rest = todo[0], todo[1:]

        def on_response(msg) -> None:
            if msg is None or msg.msg_type != mmswire.MSG_READ_RESP:
                self._device_missed(cfg, stats)
                return
            got.append((msg.path, msg.value, msg.quality,
                        float(msg.timestamp_ms or 0)))
            self._read_chain(cfg, rest, got, stats)

        self._poll_client.read(cfg.ip, cfg.port, path, on_response,
                               timeout_ms=REQUEST_TIMEOUT_MS)

    def _device_done(self, cfg: DeviceConfig, got: list[tuple],
                     stats: CycleStats) -> None:
        self._misses[cfg.device_id] = 0
        changed = self.tags.update_device(cfg.device_id, got,
                                          scada_ts=self.engine.now_ms())
        stats.updated.update(t.name for t in changed)
        self._chain_finished(stats)

    def _device_missed(self, cfg: DeviceConfig, stats: CycleStats) -> None:
        stats.missed.add(cfg.device_id)
        self._misses[cfg.device_id] += 1
        if self._misses[cfg.device_id] >= STALE_AFTER_MISSES:
            changed = self.tags.degrade_device(cfg.device_id, "stale",
                                               scada_ts=self.engine.now_ms())
            stats.updated.update(t.name for t in changed)
        self._chain_finished(stats)

    def _chain_finished(self, stats: CycleStats) -> None:
        stats.devices_done += 1
        if stats.devices_done == stats.devices_total:
            stats.done = True
            stats.duration_ms = self.engine.now_ms() - stats.started_ms

    # ------------------------------------------------------------------
    # operator writes
    # ------------------------------------------------------------------

    def write_tag(self, operator: str, tag_name: str, value) -> CommandRecord:
        """Queue an operator write; returns its ledger record immediately.

        The record's ``outcome`` resolves from the device response within
        the request timeout, and ``observed`` is filled from the paired
        status tag after the readback window.  Raises :class:`KeyError`
        for unknown tags and :class:`ScadaError` for non-control tags.
        """
        if self._cmd_client is None:
            raise RuntimeError("scada engine not started")
        tag = self.tags.get(tag_name)           # KeyError if unknown
        if tag.kind != "control":
            raise ScadaError(f"{tag_name} is a {tag.kind} tag, not a control")
        cfg = self.configs[tag.device]
        obj = next(o for o in cfg.objects if o.path == tag_name)
        record = CommandRecord(
            cmd_id=next(self._cmd_ids),
            tag=tag_name,
            value=value,
            operator=operator,
            issued_ts=self.engine.now_ms(),
            status_tag=self._status_by_target.get(obj.target or ""),
        )
        self.commands.append(record)
        self._cmd_queue.append((record, cfg, tag_name, value))
        # issue from the engine thread: callers may be gateway HTTP threads
        self.engine.call_soon(self._pump_commands)
        return record

    def _pump_commands(self) -> None:
        if self._cmd_inflight or not self._cmd_queue:
            return
        record, cfg, path, value = self._cmd_queue.popleft()
        self._cmd_inflight = True

        def on_response(msg) -> None:
            self._cmd_inflight = False
            record.resolved_ts = self.engine.now_ms()
            if msg is None:
                record.outcome = "timeout"
            elif msg.msg_type == mmswire.MSG_WRITE_RESP:
                record.outcome = "acked"
            else:
                record.outcome = "failed"
                record.error = str(msg.value) if msg.value is not None else "error"
            if record.status_tag is not None:
                self.engine.call_after(
                    READBACK_CYCLES * self.poll_ms + READBACK_SLACK_MS,
                    self._readback, record)
            self._pump_commands()

        self._cmd_client.write(cfg.ip, cfg.port, path, value, on_response,
                               timeout_ms=REQUEST_TIMEOUT_MS)

    def _readback(self, record: CommandRecord) -> None:
        try:
            tag = self.tags.get(record.status_tag)
        except KeyError:
            return
        record.observed = tag.value
        record.observed_quality = tag.quality
        record.observed_ts = self.engine.now_ms()

    def find_command(self, cmd_id: int) -> Optional[CommandRecord]:
        for record in self.commands:
            if record.cmd_id == cmd_id:
                return record
        return None

    # ------------------------------------------------------------------
    # historian feed
    # ------------------------------------------------------------------

    def _scheduled_push(self) -> None:
        if not self._running:
            return
        self._push_timer = self.engine.call_after(self.push_ms, self._scheduled_push)
        self.push_historian()

    def push_historian(self) -> int:
        """Ship journalled tag changes; returns samples acked this push.

        Unreachable historian: samples stay in the bounded retry buffer
        (oldest dropped beyond ``BUFFER_MAX``) and the next push retries.
        """
        if self.historian is None:
            return 0
        self._buffer.extend(self.tags.drain_journal())
        overflow = len(self._buffer) - BUFFER_MAX
        if overflow > 0:
            for _ in range(overflow):
                self._buffer.popleft()
            self._dropped += overflow
            logger.error("historian buffer overflow: dropped %d oldest samples",
                         overflow)
        if not self._buffer:
            return 0
        batch = list(self._buffer)
        try:
            self.historian.append(batch)
        except ConnectionError as exc:
            logger.warning("historian unreachable (%s); %d samples buffered",
                           exc, len(self._buffer))
            return 0
        except HistorianError as exc:
            # sequence conflict (possible only after an overflow drop):
            # nothing in this buffer can ever be accepted, so shed it
            logger.error("historian rejected batch (%s); dropping %d samples",
                         exc, len(self._buffer))
            self._buffer.clear()
            return 0
        self._buffer.clear()
        return len(batch)

    @property
    def buffered_samples(self) -> int:
        return len(self._buffer) + self.tags.journal_size()
