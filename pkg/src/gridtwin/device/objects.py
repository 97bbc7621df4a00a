"""Named data-object model and device roster loading.

Every device serves a table of objects addressed as
``"<device>/<node>.<attribute>"``.  Measurement objects track a bus topic;
status objects track breaker topics and feed event bursts; control objects
accept writes and map to actuator targets.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import yaml

from gridtwin.databus.topics import TopicError, validate_publish_topic

KINDS = ("measurement", "status", "control")
VALUE_TYPES = ("boolean", "float64", "int64", "utf8")
DEVICE_KINDS = ("IED", "PLC", "AMI")

PYTHON_TYPES = {
    "boolean": bool,
    "float64": float,
    "int64": int,
    "utf8": str,
}

DEFAULT_VALUES = {
    "boolean": False,
    "float64": 0.0,
    "int64": 0,
    "utf8": "",
}


class RosterError(ValueError):
    pass


@dataclass
class DataObject:
    path: str
    kind: str
    value_type: str
    value: object = None
    writable: bool = False
    source_topic: Optional[str] = None
    quality: str = "stale"
    updated_ts: Optional[float] = None
    target: Optional[str] = None          # control objects: actuator id
    mirror_of: Optional[str] = None       # PLC mirrors: source device id

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RosterError(f"{self.path}: kind must be one of {KINDS}")
        if self.value_type not in VALUE_TYPES:
            raise RosterError(f"{self.path}: value_type must be one of {VALUE_TYPES}")
        if self.kind == "control":
            self.writable = True
            # set-points are the device's own state, never sourced: always fresh
            self.quality = "good"
            if self.target is None:
                raise RosterError(f"{self.path}: control object needs a target")
        if self.kind == "measurement" and self.writable:
            raise RosterError(f"{self.path}: measurement objects are read-only")
        if self.value is None:
            self.value = DEFAULT_VALUES[self.value_type]

    def parse_payload(self, payload: bytes):
        """Decode a bus payload into this object's value type."""
        text = payload.decode("utf-8")
        if self.value_type == "boolean":
            if text not in ("0", "1"):
                raise ValueError(f"boolean payload must be '0'/'1', got {text!r}")
            return text == "1"
        if self.value_type == "float64":
            return float(text)
        if self.value_type == "int64":
            return int(text)
        return text


class ObjectTable:
    """Per-device object map with deterministic iteration order."""

    def __init__(self, objects: list[DataObject]):
        self._objects: dict[str, DataObject] = {}
        for obj in objects:
            if obj.path in self._objects:
                raise RosterError(f"duplicate object path {obj.path}")
            self._objects[obj.path] = obj

    def get(self, path: str) -> DataObject | None:
        return self._objects.get(path)

    def add(self, obj: DataObject) -> None:
        self._objects[obj.path] = obj

    def paths(self) -> list[str]:
        return list(self._objects)

    def __iter__(self):
        return iter(self._objects.values())

    def __len__(self):
        return len(self._objects)


@dataclass
class DeviceConfig:
    device_id: str
    kind: str
    zone: str
    ip: str
    port: int = 102
    objects: list[DataObject] = field(default_factory=list)
    polled_ieds: list[str] = field(default_factory=list)   # PLC only
    goose: bool = False                                     # IED default True

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise RosterError(f"{self.device_id}: kind must be one of {DEVICE_KINDS}")


def _parse_object(raw: dict, device_id: str) -> DataObject:
    path = raw.get("path")
    if not isinstance(path, str) or not path.startswith(f"{device_id}/"):
        raise RosterError(
            f"{device_id}: object path {path!r} must start with '{device_id}/'")
    topic = raw.get("source_topic")
    if topic is not None:
        try:
            validate_publish_topic(topic)
        except TopicError as exc:
            raise RosterError(f"{path}: bad source_topic: {exc}") from exc
    return DataObject(
        path=path,
        kind=raw.get("kind", "measurement"),
        value_type=raw.get("value_type", "float64"),
        writable=bool(raw.get("writable", False)),
        source_topic=topic,
        target=raw.get("target"),
    )


def load_roster(doc: dict) -> list[DeviceConfig]:
    """Validate a roster document into device configurations."""
    if not isinstance(doc, dict) or not isinstance(doc.get("devices"), list):
        raise RosterError("roster document must contain a devices list")
    configs: list[DeviceConfig] = []
    seen_ids: set[str] = set()
    seen_addrs: dict[tuple[str, int], str] = {}
    for raw in doc["devices"]:
        device_id = raw.get("device_id")
        if not isinstance(device_id, str) or not device_id:
            raise RosterError(f"device entry missing device_id: {raw!r}")
        if device_id in seen_ids:
            raise RosterError(f"duplicate device_id {device_id}")
        seen_ids.add(device_id)
        cfg = DeviceConfig(
            device_id=device_id,
            kind=raw.get("kind", "IED"),
            zone=raw.get("zone", ""),
            ip=raw.get("ip", ""),
            port=int(raw.get("port", 102)),
            objects=[_parse_object(o, device_id) for o in raw.get("objects") or []],
            polled_ieds=list(raw.get("polled_ieds") or []),
            goose=bool(raw.get("goose", raw.get("kind", "IED") == "IED")),
        )
        addr = (cfg.ip, cfg.port)
        if addr in seen_addrs:
            raise RosterError(
                f"{device_id}: net_addr {cfg.ip}:{cfg.port} collides with {seen_addrs[addr]}")
        seen_addrs[addr] = device_id
        if cfg.kind == "IED" and not any(o.kind == "status" for o in cfg.objects):
            raise RosterError(f"{device_id}: IED must declare at least one status object")
        if cfg.kind == "AMI":
            bad = [o.path for o in cfg.objects if o.kind != "measurement"]
            if bad:
                raise RosterError(f"{device_id}: AMI devices carry measurements only, got {bad}")
        if cfg.kind != "PLC" and cfg.polled_ieds:
            raise RosterError(f"{device_id}: polled_ieds is a PLC field")
        configs.append(cfg)
    # polled ieds must exist
    ids = {c.device_id for c in configs}
    for cfg in configs:
        for ied in cfg.polled_ieds:
            if ied not in ids:
                raise RosterError(f"{cfg.device_id}: polled IED {ied!r} not in roster")
    return configs


_ROSTER_CACHE: dict | None = None


def default_roster_doc() -> dict:
    global _ROSTER_CACHE
    if _ROSTER_CACHE is None:
        text = resources.files("gridtwin.configs").joinpath("roster.yaml").read_text("utf-8")
        _ROSTER_CACHE = yaml.safe_load(text)
    return copy.deepcopy(_ROSTER_CACHE)


def default_roster() -> list[DeviceConfig]:
    return load_roster(default_roster_doc())
