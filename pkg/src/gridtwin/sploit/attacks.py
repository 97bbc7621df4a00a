"""Attack designer and launcher for the twin's switched fabric.

The designer half turns the device roster plus network layout into a map of
attackable points (who produces a value, who consumes it, which switches its
traffic crosses) and compiles :class:`AttackSpec` objects into interception
rules.  The launcher half drives those rules onto switches through the
launcher control API, with atomic rollback when any install is refused.

Four attack modes:

- ``spoof_status`` — rewrite a breaker-position reading on its way to every
  poller, so operators see OFF while the process runs.
- ``spoof_measurement`` — rewrite analog readings to a constant or replay a
  recorded profile (see :func:`record_disconnected_profile`).
- ``intercept_command`` — flip an operator write so the device executes the
  attacker's value, while write acknowledgements and subsequent set-point
  reads echo what the operator expects to see.
- ``composite`` — several of the above installed and removed as one unit.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

from gridtwin.device.objects import DeviceConfig, default_roster
from gridtwin.scada.engine import DEFAULT_IP as DEFAULT_SCADA_IP
from gridtwin.sploit.client import LauncherClient, SploitError, SploitRuntimeError
from gridtwin.vnet.fabric import Fabric

logger = logging.getLogger(__name__)

MODES = ("spoof_status", "spoof_measurement", "intercept_command", "composite")

_WIRE_TYPES = {"boolean": "bool", "float64": "f64", "int64": "i64", "utf8": "utf8"}
_PY_TYPES = {"boolean": bool, "float64": (int, float), "int64": int, "utf8": str}


def _typed(value_type: str, value) -> dict:
    """Payload value -> typed wire wrapper, checked against the point's type."""
    expected = _PY_TYPES[value_type]
    if value_type != "boolean" and isinstance(value, bool):
        raise SploitError(f"expected {value_type} value, got bool {value!r}")
    if not isinstance(value, expected):
        raise SploitError(f"expected {value_type} value, got {value!r}")
    return {"type": _WIRE_TYPES[value_type], "v": value}


# ----------------------------------------------------------------------
# Target map: what can be attacked, and from where
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class TargetPoint:
    """One attackable data object and the wire path its traffic takes."""
    path: str
    kind: str                       # measurement | status | control
    value_type: str
    device: str
    device_kind: str
    zone: str
    device_ip: str
    device_port: int
    switch: str                     # the producing device's attachment switch
    consumers: tuple[str, ...]      # endpoints that read this point
    candidate_switches: tuple[str, ...]  # producer-side first
    source_topic: str | None = None
    target: str | None = None       # control points: actuator id

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "kind": self.kind,
            "value_type": self.value_type,
            "device": self.device,
            "device_kind": self.device_kind,
            "zone": self.zone,
            "device_ip": self.device_ip,
            "device_port": self.device_port,
            "switch": self.switch,
            "consumers": list(self.consumers),
            "candidate_switches": list(self.candidate_switches),
            "source_topic": self.source_topic,
            "target": self.target,
        }


class TargetMap:
    """Enumerates attackable points from the roster and network layout.

    Candidate switches for a point are every switch its traffic transits on
    the way to a consumer (rules apply at each hop, so any of them works);
    the first entry is the switch nearest the producing device.
    """

    def __init__(self, roster: list[DeviceConfig] | None = None,
                 network_doc: dict | None = None,
                 scada_ip: str = DEFAULT_SCADA_IP):
        self._roster = roster if roster is not None else default_roster()
        self._layout = Fabric(doc=network_doc)   # path math only, never sends
        self.scada_switch = self._layout.switch_for_ip(scada_ip)
        self._points: dict[str, TargetPoint] = {}

        plc_pollers: dict[str, DeviceConfig] = {}
        for cfg in self._roster:
            for ied in cfg.polled_ieds:
                plc_pollers[ied] = cfg

        for cfg in self._roster:
            dev_switch = self._layout.switch_for_ip(cfg.ip)
            consumers: list[tuple[str, str]] = [("SCADA", self.scada_switch)]
            plc = plc_pollers.get(cfg.device_id)
            if plc is not None:
                consumers.append((plc.device_id, self._layout.switch_for_ip(plc.ip)))
            candidates: list[str] = []
            for _, consumer_switch in consumers:
                for sid in self._layout.path(dev_switch, consumer_switch):
                    if sid not in candidates:
                        candidates.append(sid)
            for obj in cfg.objects:
                self._points[obj.path] = TargetPoint(
                    path=obj.path,
                    kind=obj.kind,
                    value_type=obj.value_type,
                    device=cfg.device_id,
                    device_kind=cfg.kind,
                    zone=cfg.zone,
                    device_ip=cfg.ip,
                    device_port=cfg.port,
                    switch=dev_switch,
                    consumers=tuple(name for name, _ in consumers),
                    candidate_switches=tuple(candidates),
                    source_topic=obj.source_topic,
                    target=obj.target,
                )

    def get(self, path: str) -> TargetPoint:
        point = self._points.get(path)
        if point is None:
            raise SploitError(f"unknown target path {path!r}: not in the device roster")
        return point

    def list(self) -> list[TargetPoint]:
        return list(self._points.values())


# ----------------------------------------------------------------------
# Attack specification
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class AttackSpec:
    """One attack: what to forge, where to sit, how long to stay."""
    attack_id: str
    mode: str
    targets: tuple[str, ...] = ()
    payload: dict = field(default_factory=dict)
    placement: tuple[str, ...] = ()        # empty -> switch nearest the producer
    duration_ms: float | None = None       # None -> until stopped
    parts: tuple["AttackSpec", ...] = ()   # composite only

    def __post_init__(self):
        if not isinstance(self.attack_id, str) or not self.attack_id:
            raise SploitError("attack_id must be a non-empty string")
        if self.mode not in MODES:
            raise SploitError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.duration_ms is not None and self.duration_ms <= 0:
            raise SploitError("duration_ms must be positive when given")
        if self.mode == "composite":
            if self.targets or self.payload:
                raise SploitError("composite attacks carry parts, not targets/payload")
            if not self.parts:
                raise SploitError("composite attack needs at least one part")
            for part in self.parts:
                if part.mode == "composite":
                    raise SploitError("composite parts must be concrete attacks")
        else:
            if self.parts:
                raise SploitError(f"{self.mode} attacks take no parts")
            if not self.targets:
                raise SploitError("attack needs at least one target path")

    @staticmethod
    def from_dict(obj: dict, *, default_id: str | None = None) -> "AttackSpec":
        if not isinstance(obj, dict):
            raise SploitError(f"attack spec must be a mapping, got {type(obj).__name__}")
        known = {"attack_id", "mode", "targets", "payload", "placement",
                 "duration_ms", "parts"}
        unknown = set(obj) - known
        if unknown:
            raise SploitError(f"unknown attack spec fields {sorted(unknown)}")
        attack_id = obj.get("attack_id", default_id)
        parts_raw = obj.get("parts") or []
        if not isinstance(parts_raw, list):
            raise SploitError("parts must be a list")
        parts = tuple(
            AttackSpec.from_dict(p, default_id=f"{attack_id}.{i}")
            for i, p in enumerate(parts_raw, start=1))
        targets = obj.get("targets") or ()
        if isinstance(targets, str):
            targets = (targets,)
        placement = obj.get("placement") or ()
        if isinstance(placement, str):
            placement = (placement,)
        payload = obj.get("payload") or {}
        if not isinstance(payload, dict):
            raise SploitError("payload must be a mapping")
        duration = obj.get("duration_ms")
        return AttackSpec(
            attack_id=attack_id,
            mode=obj.get("mode", ""),
            targets=tuple(targets),
            payload=payload,
            placement=tuple(placement),
            duration_ms=float(duration) if duration is not None else None,
            parts=parts,
        )

    def to_dict(self) -> dict:
        out: dict = {"attack_id": self.attack_id, "mode": self.mode}
        if self.targets:
            out["targets"] = list(self.targets)
        if self.payload:
            out["payload"] = self.payload
        if self.placement:
            out["placement"] = list(self.placement)
        if self.duration_ms is not None:
            out["duration_ms"] = self.duration_ms
        if self.parts:
            out["parts"] = [p.to_dict() for p in self.parts]
        return out


@dataclass(frozen=True)
class PlannedRule:
    """One rule the attack will install: fully resolved, ready to send."""
    switch: str
    rule_id: str
    rule: dict
    note: str      # human-readable role, e.g. "spoof_status SIED1/..."


def _resolve_placement(spec: AttackSpec, point: TargetPoint) -> tuple[str, ...]:
    if not spec.placement:
        # nearest the producing device: everything downstream sees the forgery
        return (point.switch,)
    for sid in spec.placement:
        if sid not in point.candidate_switches:
            raise SploitError(
                f"{spec.attack_id}: switch {sid!r} is not on the path between "
                f"{point.device} and SCADA (candidates: "
                f"{list(point.candidate_switches)})")
    return spec.placement


def _plan_concrete(spec: AttackSpec, tmap: TargetMap,
                   ids: "itertools.count", client_id: str) -> list[PlannedRule]:
    planned: list[PlannedRule] = []

    def add(switch: str, match: dict, action: dict, note: str) -> None:
        planned.append(PlannedRule(
            switch=switch,
            rule_id=f"{client_id}.{spec.attack_id}.{next(ids)}",
            rule={"match": match, "action": action},
            note=note,
        ))

    if spec.mode == "spoof_status":
        if "value" not in spec.payload:
            raise SploitError(f"{spec.attack_id}: spoof_status payload needs 'value'")
        for path in spec.targets:
            point = tmap.get(path)
            if point.kind != "status":
                raise SploitError(
                    f"{spec.attack_id}: {path} is a {point.kind} point, "
                    f"spoof_status needs a status point")
            value = _typed(point.value_type, spec.payload["value"])
            for switch in _resolve_placement(spec, point):
                add(switch,
                    {"src_ip": point.device_ip, "msg_type": "ReadResp",
                     "path_glob": path},
                    {"kind": "rewrite_value", "value": value},
                    f"spoof_status {path} -> {spec.payload['value']}")
        return planned

    if spec.mode == "spoof_measurement":
        has_value = "value" in spec.payload
        has_profiles = "profiles" in spec.payload
        if has_value == has_profiles:
            raise SploitError(
                f"{spec.attack_id}: spoof_measurement payload needs exactly one "
                f"of 'value' (constant) or 'profiles' (recorded replay)")
        for path in spec.targets:
            point = tmap.get(path)
            if point.kind != "measurement":
                raise SploitError(
                    f"{spec.attack_id}: {path} is a {point.kind} point, "
                    f"spoof_measurement needs a measurement point")
            if has_value:
                action = {"kind": "rewrite_value",
                          "value": _typed(point.value_type, spec.payload["value"])}
                note = f"spoof_measurement {path} -> {spec.payload['value']}"
            else:
                profiles = spec.payload["profiles"]
                values = profiles.get(path) if isinstance(profiles, dict) else None
                if not values:
                    raise SploitError(
                        f"{spec.attack_id}: no recorded profile for {path}")
                action = {"kind": "rewrite_fn", "name": "replay_profile",
                          "args": {"values": list(values),
                                   "period_ms": float(spec.payload.get("period_ms", 100.0))}}
                note = f"spoof_measurement {path} -> replay {len(values)} samples"
            for switch in _resolve_placement(spec, point):
                add(switch,
                    {"src_ip": point.device_ip, "msg_type": "ReadResp",
                     "path_glob": path},
                    action, note)
        return planned

    # intercept_command
    if "execute" not in spec.payload:
        raise SploitError(f"{spec.attack_id}: intercept_command payload needs "
                          f"'execute' (the value the device really gets)")
    unknown = set(spec.payload) - {"execute", "echo"}
    if unknown:
        raise SploitError(f"{spec.attack_id}: unknown payload fields {sorted(unknown)}")
    for path in spec.targets:
        point = tmap.get(path)
        if point.kind != "control":
            raise SploitError(
                f"{spec.attack_id}: {path} is a {point.kind} point, "
                f"intercept_command needs a control point")
        execute = _typed(point.value_type, spec.payload["execute"])
        for switch in _resolve_placement(spec, point):
            add(switch,
                {"dst_ip": point.device_ip, "msg_type": "WriteReq",
                 "path_glob": path},
                {"kind": "rewrite_value", "value": execute},
                f"intercept {path}: device executes {spec.payload['execute']}")
            if "echo" in spec.payload:
                echo = _typed(point.value_type, spec.payload["echo"])
                # the ack and every later set-point read show the operator
                # the value they asked for, not the one the device got
                add(switch,
                    {"src_ip": point.device_ip, "msg_type": "WriteResp",
                     "path_glob": path},
                    {"kind": "rewrite_value", "value": echo},
                    f"intercept {path}: ack echoes {spec.payload['echo']}")
                add(switch,
                    {"src_ip": point.device_ip, "msg_type": "ReadResp",
                     "path_glob": path},
                    {"kind": "rewrite_value", "value": echo},
                    f"intercept {path}: reads echo {spec.payload['echo']}")
    return planned


def plan_rules(spec: AttackSpec, tmap: TargetMap,
               client_id: str = "sploit") -> list[PlannedRule]:
    """Compile a spec into concrete rules; raises SploitError, installs nothing."""
    ids = itertools.count(1)
    if spec.mode == "composite":
        planned: list[PlannedRule] = []
        for part in spec.parts:
            planned.extend(_plan_concrete(part, tmap, ids, client_id))
        return planned
    return _plan_concrete(spec, tmap, ids, client_id)


# ----------------------------------------------------------------------
# Launch handle
# ----------------------------------------------------------------------


class AttackHandle:
    """A launched attack: live hit counts, idempotent teardown."""

    def __init__(self, spec: AttackSpec, planned: list[PlannedRule],
                 client: LauncherClient, *, expires_monotonic: float | None = None):
        self.spec = spec
        self.attack_id = spec.attack_id
        self.planned = planned
        self.installed_ts = time.time()
        self.expires_monotonic = expires_monotonic
        self._client = client
        self.stopped = False

    @property
    def rules(self) -> list[tuple[str, str]]:
        return [(p.switch, p.rule_id) for p in self.planned]

    @property
    def expired(self) -> bool:
        return (self.expires_monotonic is not None
                and time.monotonic() >= self.expires_monotonic)

    def status(self) -> list[dict]:
        """Live launcher state for this attack's rules, hit counts included."""
        mine = {(p.switch, p.rule_id): p.note for p in self.planned}
        out = []
        for entry in self._client.rules():
            key = (entry["switch"], entry["rule_id"])
            if key in mine:
                out.append(dict(entry, note=mine[key]))
        return out

    def stop(self) -> int:
        """Remove this attack's rules; safe to call twice."""
        if self.stopped:
            return 0
        self.stopped = True
        removed = 0
        for switch, rule_id in self.rules:
            try:
                if self._client.remove(switch, rule_id):
                    removed += 1
            except SploitRuntimeError as exc:
                logger.warning("removing %s from %s failed: %s", rule_id, switch, exc)
        return removed


# ----------------------------------------------------------------------
# Rehearsal recording for replay payloads
# ----------------------------------------------------------------------


def record_disconnected_profile(paths, open_breakers, *, duration_ms: float = 10_000.0,
                                roster: list[DeviceConfig] | None = None) -> dict[str, list[float]]:
    """Record what the target measurements publish while genuinely disconnected.

    Runs a private accelerated copy of the process model, opens the named
    breakers, then samples each path's source topic for ``duration_ms`` of
    model time.  The result feeds a replay payload whose forged values are
    physically plausible because they actually happened; replay keeps the
    device's own (fresh) timestamps since only the value field is rewritten.
    """
    from gridtwin.databus.broker import Broker
    from gridtwin.databus.client import LocalBusClient
    from gridtwin.procsim import ActuatorCommand, ProcessSimulator, default_topology
    from gridtwin.runtime import Engine

    cfgs = roster if roster is not None else default_roster()
    topic_by_path: dict[str, str] = {}
    for cfg in cfgs:
        for obj in cfg.objects:
            if obj.kind == "measurement" and obj.source_topic:
                topic_by_path[obj.path] = obj.source_topic
    missing = [p for p in paths if p not in topic_by_path]
    if missing:
        raise SploitError(f"no measurement source known for {missing}")

    paths_by_topic: dict[str, list[str]] = {}
    for p in paths:
        paths_by_topic.setdefault(topic_by_path[p], []).append(p)
    recorded: dict[str, list[float]] = {p: [] for p in paths}

    def on_message(topic: str, payload: bytes) -> None:
        for p in paths_by_topic.get(topic, ()):
            recorded[p].append(float(payload.decode("utf-8")))

    engine = Engine(mode="fast")
    broker = Broker(engine=engine)
    sim = ProcessSimulator(default_topology(), broker=broker, engine=engine)
    sim.start()
    for seq, breaker in enumerate(open_breakers, start=1):
        ack = sim.apply_command(ActuatorCommand(
            target=breaker, action="open", origin="rehearsal", seq=seq))
        if not ack.ok:
            raise SploitError(f"rehearsal cannot open {breaker!r}: {ack.reason}")
    engine.run_for(300)   # let the trip take effect before sampling

    client = LocalBusClient(broker, "rehearsal", on_message)
    for topic in paths_by_topic:
        client.subscribe(topic)
    engine.run_for(duration_ms)
    client.close()
    sim.stop()

    empty = [p for p, values in recorded.items() if not values]
    if empty:
        raise SploitError(f"rehearsal recorded nothing for {empty}")
    return recorded


# ----------------------------------------------------------------------
# Facade
# ----------------------------------------------------------------------


class Sploit:
    """Designer + launcher in one object; the CLI is a thin wrapper over it.

    ``waiter`` is how timed scenario steps sleep (milliseconds); inject an
    engine-driving callable to run scenarios against an accelerated twin.
    Attacks launched with a duration are reaped lazily: the next call into
    this object removes any whose time is up.
    """

    def __init__(self, launcher: LauncherClient | tuple | None = None, *,
                 roster: list[DeviceConfig] | None = None,
                 network_doc: dict | None = None,
                 scada_ip: str = DEFAULT_SCADA_IP,
                 client_id: str = "sploit",
                 waiter=None):
        if isinstance(launcher, LauncherClient):
            self.client = launcher
        elif launcher is None:
            self.client = LauncherClient()
        else:
            host, port = launcher
            self.client = LauncherClient(host, port)
        self.client_id = client_id
        self.targets = TargetMap(roster=roster, network_doc=network_doc,
                                 scada_ip=scada_ip)
        self.waiter = waiter or (lambda ms: time.sleep(ms / 1000.0))
        self._handles: dict[str, AttackHandle] = {}

    # ------------------------------------------------------------------

    def list_targets(self) -> list[dict]:
        return [point.to_dict() for point in self.targets.list()]

    def validate(self, spec: AttackSpec) -> list[PlannedRule]:
        return plan_rules(spec, self.targets, self.client_id)

    def launch(self, spec: AttackSpec) -> AttackHandle:
        """Install the spec's rules; any refusal rolls back what was placed."""
        planned = self.validate(spec)
        self.reap()
        if spec.attack_id in self._handles:
            raise SploitError(f"attack id {spec.attack_id!r} is already active")
        installed: list[tuple[str, str]] = []
        for pr in planned:
            try:
                self.client.install(pr.switch, pr.rule, rule_id=pr.rule_id,
                                    client=self.client_id)
            except SploitRuntimeError as exc:
                for switch, rule_id in reversed(installed):
                    try:
                        self.client.remove(switch, rule_id)
                    except SploitRuntimeError:
                        logger.warning("rollback of %s on %s failed", rule_id, switch)
                raise SploitRuntimeError(
                    f"launch {spec.attack_id!r} refused at {pr.switch}/{pr.rule_id} "
                    f"({exc}); rolled back {len(installed)} rule(s)") from exc
            installed.append((pr.switch, pr.rule_id))
        expires = (time.monotonic() + spec.duration_ms / 1000.0
                   if spec.duration_ms is not None else None)
        handle = AttackHandle(spec, planned, self.client,
                              expires_monotonic=expires)
        self._handles[spec.attack_id] = handle
        logger.info("launched %s: %d rule(s)", spec.attack_id, len(planned))
        return handle

    def reap(self) -> int:
        """Remove attacks whose duration has elapsed."""
        removed = 0
        for attack_id, handle in list(self._handles.items()):
            if handle.expired:
                removed += handle.stop()
                del self._handles[attack_id]
        return removed

    def status(self) -> dict:
        """Launcher-derived view: works from a fresh process too."""
        self.reap()
        rules = [r for r in self.client.rules()
                 if r.get("installed_by") == self.client_id]
        watches = [w for w in self.client.watches()
                   if w.get("installed_by") == self.client_id]
        return {"rules": rules, "watches": watches}

    def run_scenario(self, script) -> "ScenarioRun":   # noqa: F821
        from gridtwin.sploit.scenario import execute_scenario
        return execute_scenario(self, script)

    def stop_all(self) -> int:
        """Remove every rule and watch this tool installed, wherever it sits.

        Counts entries actually removed; afterwards the fabric forwards
        byte-identically again.
        """
        removed = 0
        for entry in self.client.rules():
            if entry.get("installed_by") != self.client_id:
                continue
            if self.client.remove(entry["switch"], entry["rule_id"]):
                removed += 1
        for entry in self.client.watches():
            if entry.get("installed_by") != self.client_id:
                continue
            if self.client.unwatch(entry["switch"], entry["watch_id"]):
                removed += 1
        for handle in self._handles.values():
            handle.stopped = True
        self._handles.clear()
        return removed
