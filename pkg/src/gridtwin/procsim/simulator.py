"""Tick-stepped process simulator.

Owns all electrical state.  Commands are queued (directly or via the data-bus
``epic/cmd/<target>`` topics) and take effect at the next tick boundary; each
tick solves the network and publishes per-bus sensor topics plus per-breaker
status topics.
"""

from __future__ import annotations

import json
import logging
import math
import socket
import threading
from dataclasses import dataclass

from gridtwin.procsim.solver import solve_network
from gridtwin.procsim.topology import GridTopology
from gridtwin.runtime import Engine

logger = logging.getLogger(__name__)

DEFAULT_TICK_MS = 100.0
FREQ_DROOP_HZ_PER_PU = 0.5
FREQ_TIME_CONSTANT_S = 2.0
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class ActuatorCommand:
    target: str                # breaker_id or load_id
    action: str                # "open" | "close" | "set_percent"
    value: int | None = None   # set_percent only
    origin: str = ""
    seq: int = 0


@dataclass(frozen=True)
class CommandAck:
    ok: bool
    seq: int
    target: str
    state: str = ""
    reason: str = ""


@dataclass(frozen=True)
class BusRecord:
    bus_id: str
    zone: str
    voltage_ll: float    # volts line-to-line
    current_a: float     # amperes per phase (balanced)
    p_kw: float          # consumption positive
    q_kvar: float
    frequency_hz: float


@dataclass(frozen=True)
class BreakerRecord:
    breaker_id: str
    zone: str
    closed: bool


@dataclass(frozen=True)
class ElectricalSnapshot:
    timestamp_ms: float
    buses: tuple[BusRecord, ...]
    breakers: tuple[BreakerRecord, ...]
    degraded: bool = False


class ProcessSimulator:
    """Steps the grid model on a fixed tick and publishes sensor values."""

    def __init__(
        self,
        topology: GridTopology,
        broker=None,
        engine: Engine | None = None,
        tick_ms: float = DEFAULT_TICK_MS,
        client_id: str = "procsim",
        udp_mirror: tuple[str, int] | None = None,
    ):
        self.topology = topology
        self.engine = engine
        self.tick_ms = float(tick_ms)
        self.breaker_closed = {bk.id: bk.initial_closed for bk in topology.breakers}
        self.load_setpoints = {ld.id: ld.setpoint_percent for ld in topology.loads}
        self._frequency = topology.f_nominal_hz
        self._pending: list[ActuatorCommand] = []
        self._last_seq: dict[str, int] = {}
        self._lock = threading.Lock()
        self._snapshot: ElectricalSnapshot | None = None
        self._last_records: tuple[BusRecord, ...] | None = None
        self._timer = None
        self._now_fallback = 0.0
        self._udp_mirror = udp_mirror
        self._udp_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM) if udp_mirror else None
        self._client = None
        if broker is not None:
            from gridtwin.databus.client import LocalBusClient
            self._client = LocalBusClient(broker, client_id, self._on_bus_command)
            self._client.subscribe("epic/cmd/+")

    # ------------------------------------------------------------------
    # commands
    # ------------------------------------------------------------------

    def apply_command(self, cmd: ActuatorCommand) -> CommandAck:
        """Queue a command for the next tick; validate and acknowledge now."""
        with self._lock:
            last = self._last_seq.get(cmd.origin)
            if last is not None and cmd.seq <= last:
                return CommandAck(False, cmd.seq, cmd.target,
                                  reason=f"stale seq {cmd.seq} (last {last})")
            ack = self._validate(cmd)
            if ack.ok:
                self._last_seq[cmd.origin] = cmd.seq
                self._pending.append(cmd)
            return ack

    def _validate(self, cmd: ActuatorCommand) -> CommandAck:
        topo = self.topology
        if cmd.target in self.breaker_closed:
            if cmd.action not in ("open", "close"):
                return CommandAck(False, cmd.seq, cmd.target,
                                  reason=f"action {cmd.action!r} invalid for breaker")
            closed = cmd.action == "close"
            return CommandAck(True, cmd.seq, cmd.target, state="1" if closed else "0")
        if cmd.target in self.load_setpoints:
            if cmd.action != "set_percent":
                return CommandAck(False, cmd.seq, cmd.target,
                                  reason=f"action {cmd.action!r} invalid for load")
            if topo.load(cmd.target).fixed:
                return CommandAck(False, cmd.seq, cmd.target, reason="fixed load")
            if cmd.value is None or cmd.value not in range(0, 101, 10):
                return CommandAck(False, cmd.seq, cmd.target,
                                  reason=f"set_percent must be 0-100 step 10, got {cmd.value!r}")
            return CommandAck(True, cmd.seq, cmd.target, state=str(cmd.value))
        return CommandAck(False, cmd.seq, cmd.target, reason="unknown target")

    def _on_bus_command(self, topic: str, payload: bytes) -> None:
        target = topic.split("/")[-1]
        try:
            body = json.loads(payload)
            cmd = ActuatorCommand(
                target=target,
                action=body["action"],
                value=body.get("value"),
                origin=body.get("origin", "bus"),
                seq=int(body.get("seq", 0)),
            )
        except (ValueError, KeyError, TypeError) as exc:
            logger.warning("bad command payload on %s: %s", topic, exc)
            return
        ack = self.apply_command(cmd)
        if not ack.ok:
            logger.info("command rejected: %s %s: %s", cmd.target, cmd.action, ack.reason)

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def start(self) -> None:
        """Run one step immediately, then step every tick on the engine."""
        if self.engine is None:
            raise RuntimeError("start() needs an engine; call step() directly instead")
        self.step()

    def stop(self) -> None:
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    def _now_ms(self) -> float:
        if self.engine is not None:
            return self.engine.now_ms()
        return self._now_fallback

    def step(self) -> ElectricalSnapshot:
        """Apply queued commands, solve, publish, and reschedule."""
        with self._lock:
            pending, self._pending = self._pending, []
        for cmd in pending:
            if cmd.target in self.breaker_closed:
                self.breaker_closed[cmd.target] = cmd.action == "close"
            else:
                self.load_setpoints[cmd.target] = int(cmd.value)  # validated on entry

        result = solve_network(self.topology, self.breaker_closed, self.load_setpoints)
        ts = self._now_ms()
        topo = self.topology

        # droop response: load served minus scheduled PQ injection, per-unit
        p_load_pu = sum(
            topo.load(ld.id).demand_kva(self.load_setpoints[ld.id]).real
            for ld in topo.loads
            if result.energized[topo.bus_index[ld.bus]]
        ) / topo.s_base_kva
        p_pq_pu = sum(
            src.p_kw for src in topo.sources
            if not src.is_voltage_source and result.energized[topo.bus_index[src.bus]]
        ) / topo.s_base_kva
        f_target = topo.f_nominal_hz - FREQ_DROOP_HZ_PER_PU * (p_load_pu - p_pq_pu)
        alpha = 1.0 - math.exp(-(self.tick_ms / 1000.0) / FREQ_TIME_CONSTANT_S)
        self._frequency += alpha * (f_target - self._frequency)

        if result.converged:
            records = []
            for i, bus in enumerate(topo.buses):
                v_ll = float(abs(result.v_pu[i])) * topo.v_nominal_ll
                s_kva = complex(result.s_drawn_pu[i]) * topo.s_base_kva
                apparent = abs(s_kva)
                current = apparent * 1e3 / (SQRT3 * v_ll) if v_ll > 0.0 else 0.0
                records.append(BusRecord(
                    bus_id=bus.id,
                    zone=bus.zone,
                    voltage_ll=v_ll,
                    current_a=current,
                    p_kw=s_kva.real,
                    q_kvar=s_kva.imag,
                    frequency_hz=self._frequency,
                ))
            records = tuple(records)
            self._last_records = records
            degraded = False
        else:
            logger.warning("tick at %.1f ms: solver degraded, holding previous values", ts)
            held = self._last_records or tuple(
                BusRecord(b.id, b.zone, 0.0, 0.0, 0.0, 0.0, self._frequency)
                for b in topo.buses
            )
            records = tuple(
                BusRecord(r.bus_id, r.zone, r.voltage_ll, r.current_a,
                          r.p_kw, r.q_kvar, self._frequency)
                for r in held
            )
            degraded = True

        snapshot = ElectricalSnapshot(
            timestamp_ms=ts,
            buses=records,
            breakers=tuple(
                BreakerRecord(bk.id, topo.breaker_zone(bk.id), self.breaker_closed[bk.id])
                for bk in topo.breakers
            ),
            degraded=degraded,
        )
        self._snapshot = snapshot
        self._publish(snapshot)

        if self.engine is not None:
            self._timer = self.engine.call_after(self.tick_ms, self.step)
        else:
            self._now_fallback += self.tick_ms
        return snapshot

    # ------------------------------------------------------------------
    # outputs
    # ------------------------------------------------------------------

    def snapshot(self) -> ElectricalSnapshot:
        if self._snapshot is None:
            raise RuntimeError("no snapshot yet; step() has not run")
        return self._snapshot

    def read_node(self, bus_id: str) -> BusRecord:
        if bus_id not in self.topology.bus_index:
            raise ValueError(f"unknown bus {bus_id!r}")
        snap = self.snapshot()
        return snap.buses[self.topology.bus_index[bus_id]]

    def _publish(self, snapshot: ElectricalSnapshot) -> None:
        if self._client is None and self._udp_mirror is None:
            return
        updates: list[tuple[str, str]] = []
        for rec in snapshot.buses:
            base = f"epic/{rec.zone.lower()}/{rec.bus_id}"
            updates.append((f"{base}/v", repr(rec.voltage_ll)))
            updates.append((f"{base}/i", repr(rec.current_a)))
            updates.append((f"{base}/p", repr(rec.p_kw)))
            updates.append((f"{base}/q", repr(rec.q_kvar)))
            updates.append((f"{base}/f", repr(rec.frequency_hz)))
        for bk in snapshot.breakers:
            topic = f"epic/{bk.zone.lower()}/{bk.breaker_id}/status"
            updates.append((topic, "1" if bk.closed else "0"))
        for topic, value in updates:
            if self._client is not None:
                self._client.publish(topic, value.encode())
            if self._udp_sock is not None:
                try:
                    self._udp_sock.sendto(f"{topic}\n{value}".encode(), self._udp_mirror)
                except OSError as exc:
                    logger.warning("udp mirror send failed: %s", exc)
