"""Grid topology model and document loader.

A topology document is a YAML/JSON mapping with a ``schema_version`` field and
five sections: ``buses``, ``branches``, ``breakers``, ``sources``, ``loads``.
The default document shipped in ``gridtwin/configs/topology.yaml`` describes a
four-zone low-voltage microgrid: two 10 kVA generators, a 34 kW PV array with
an 18 kW battery, a 105 kVA grid regulator, two 45 kVA load banks, a 10 kW
motor-generator and two small fixed process loads, tied together by zone
breakers.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import yaml

ZONES = ("Generation", "MicroGrid", "Transmission", "SmartHome")
SOURCE_KINDS = ("Generator", "PVBattery", "GridRegulator")
LOAD_KINDS = ("LoadBank", "MotorGenerator", "WaterTestbedFixed")
SCHEMA_VERSION = 1

# Source kinds solved as an ideal voltage at their terminal bus; the branch
# that ties the terminal to its zone hub acts as the machine's series
# impedance.  Everything else injects constant P/Q.
VOLTAGE_SOURCE_KINDS = ("Generator", "GridRegulator")


class TopologyError(ValueError):
    """Raised when a topology document is malformed or inconsistent."""


@dataclass(frozen=True)
class Bus:
    id: str
    zone: str
    nominal_voltage: float  # volts, line-to-line


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: str
    to_bus: str
    r_pu: float = 0.01
    x_pu: float = 0.05

    @property
    def series_impedance(self) -> complex:
        return complex(self.r_pu, self.x_pu)


@dataclass(frozen=True)
class Breaker:
    id: str
    branch_id: str
    initial_closed: bool = True


@dataclass(frozen=True)
class Source:
    id: str
    bus: str
    kind: str
    rating_kva: float
    p_kw: float = 0.0    # scheduled injection; PQ kinds only
    q_kvar: float = 0.0

    @property
    def is_voltage_source(self) -> bool:
        return self.kind in VOLTAGE_SOURCE_KINDS


@dataclass(frozen=True)
class Load:
    id: str
    bus: str
    kind: str
    rating_kva: float
    power_factor: float = 0.9
    setpoint_percent: int = 100

    @property
    def fixed(self) -> bool:
        return self.kind == "WaterTestbedFixed"

    def demand_kva(self, setpoint_percent: int) -> complex:
        """Constant-PQ demand at a setpoint, consumption positive."""
        s = self.rating_kva * setpoint_percent / 100.0
        p = s * self.power_factor
        q = s * (1.0 - self.power_factor ** 2) ** 0.5
        return complex(p, q)


@dataclass
class GridTopology:
    buses: list[Bus]
    branches: list[Branch]
    breakers: list[Breaker]
    sources: list[Source]
    loads: list[Load]
    s_base_kva: float = 100.0
    v_nominal_ll: float = 400.0
    f_nominal_hz: float = 50.0
    bus_index: dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        self.bus_index = {b.id: i for i, b in enumerate(self.buses)}
        self._branches_by_id = {br.id: br for br in self.branches}
        self._breakers_by_id = {bk.id: bk for bk in self.breakers}
        self._loads_by_id = {ld.id: ld for ld in self.loads}
        self._sources_by_id = {s.id: s for s in self.sources}
        self._breakers_by_branch: dict[str, list[Breaker]] = {}
        for bk in self.breakers:
            self._breakers_by_branch.setdefault(bk.branch_id, []).append(bk)

    def bus(self, bus_id: str) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    def branch(self, branch_id: str) -> Branch:
        return self._branches_by_id[branch_id]

    def breaker(self, breaker_id: str) -> Breaker:
        return self._breakers_by_id[breaker_id]

    def load(self, load_id: str) -> Load:
        return self._loads_by_id[load_id]

    def source(self, source_id: str) -> Source:
        return self._sources_by_id[source_id]

    def breakers_on(self, branch_id: str) -> list[Breaker]:
        return self._breakers_by_branch.get(branch_id, [])

    def breaker_zone(self, breaker_id: str) -> str:
        """Zone a breaker reports under: the zone of its branch's from-bus."""
        br = self.branch(self.breaker(breaker_id).branch_id)
        return self.bus(br.from_bus).zone


def _require(mapping: dict, key: str, kind: type, where: str) -> Any:
    if key not in mapping:
        raise TopologyError(f"{where}: missing field {key!r}")
    value = mapping[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise TopologyError(f"{where}: field {key!r} must be {kind.__name__}, got {value!r}")
    return value


def load_topology(doc: dict) -> GridTopology:
    """Validate a parsed topology document and build the model.

    Raises :class:`TopologyError` naming the offending field or dangling id.
    """
    if not isinstance(doc, dict):
        raise TopologyError("topology document must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise TopologyError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    system = doc.get("system", {})
    if not isinstance(system, dict):
        raise TopologyError("system: must be a mapping")

    raw_buses = doc.get("buses") or []
    if not raw_buses:
        raise TopologyError("buses: no buses")

    buses: list[Bus] = []
    for i, rb in enumerate(raw_buses):
        where = f"buses[{i}]"
        zone = _require(rb, "zone", str, where)
        if zone not in ZONES:
            raise TopologyError(f"{where}: zone must be one of {ZONES}, got {zone!r}")
        buses.append(Bus(
            id=_require(rb, "id", str, where),
            zone=zone,
            nominal_voltage=_require(rb, "nominal_voltage", float, where),
        ))
    bus_ids = {b.id for b in buses}
    if len(bus_ids) != len(buses):
        raise TopologyError("buses: duplicate id")

    branches: list[Branch] = []
    for i, rb in enumerate(doc.get("branches") or []):
        where = f"branches[{i}]"
        br = Branch(
            id=_require(rb, "id", str, where),
            from_bus=_require(rb, "from_bus", str, where),
            to_bus=_require(rb, "to_bus", str, where),
            r_pu=float(rb.get("r_pu", 0.01)),
            x_pu=float(rb.get("x_pu", 0.05)),
        )
        for end in (br.from_bus, br.to_bus):
            if end not in bus_ids:
                raise TopologyError(f"{where}: dangling bus reference {end!r}")
        if br.series_impedance == 0:
            raise TopologyError(f"{where}: zero series_impedance")
        branches.append(br)
    branch_ids = {br.id for br in branches}
    if len(branch_ids) != len(branches):
        raise TopologyError("branches: duplicate id")

    breakers: list[Breaker] = []
    for i, rb in enumerate(doc.get("breakers") or []):
        where = f"breakers[{i}]"
        bk = Breaker(
            id=_require(rb, "id", str, where),
            branch_id=_require(rb, "branch_id", str, where),
            initial_closed=bool(rb.get("initial_closed", True)),
        )
        if bk.branch_id not in branch_ids:
            raise TopologyError(f"{where}: dangling branch reference {bk.branch_id!r}")
        breakers.append(bk)
    if len({bk.id for bk in breakers}) != len(breakers):
        raise TopologyError("breakers: duplicate id")

    sources: list[Source] = []
    for i, rs in enumerate(doc.get("sources") or []):
        where = f"sources[{i}]"
        kind = _require(rs, "kind", str, where)
        if kind not in SOURCE_KINDS:
            raise TopologyError(f"{where}: kind must be one of {SOURCE_KINDS}, got {kind!r}")
        src = Source(
            id=_require(rs, "id", str, where),
            bus=_require(rs, "bus", str, where),
            kind=kind,
            rating_kva=_require(rs, "rating_kva", float, where),
            p_kw=float(rs.get("p_kw", 0.0)),
            q_kvar=float(rs.get("q_kvar", 0.0)),
        )
        if src.bus not in bus_ids:
            raise TopologyError(f"{where}: dangling bus reference {src.bus!r}")
        if src.rating_kva <= 0:
            raise TopologyError(f"{where}: rating_kva must be positive")
        if abs(complex(src.p_kw, src.q_kvar)) > src.rating_kva * 1.0001:
            raise TopologyError(f"{where}: p_kw/q_kvar exceed rating_kva")
        sources.append(src)
    if len({s.id for s in sources}) != len(sources):
        raise TopologyError("sources: duplicate id")

    loads: list[Load] = []
    for i, rl in enumerate(doc.get("loads") or []):
        where = f"loads[{i}]"
        kind = _require(rl, "kind", str, where)
        if kind not in LOAD_KINDS:
            raise TopologyError(f"{where}: kind must be one of {LOAD_KINDS}, got {kind!r}")
        ld = Load(
            id=_require(rl, "id", str, where),
            bus=_require(rl, "bus", str, where),
            kind=kind,
            rating_kva=_require(rl, "rating_kva", float, where),
            power_factor=float(rl.get("power_factor", 0.9)),
            setpoint_percent=_require(rl, "setpoint_percent", int, where)
            if "setpoint_percent" in rl else 100,
        )
        if ld.bus not in bus_ids:
            raise TopologyError(f"{where}: dangling bus reference {ld.bus!r}")
        if ld.setpoint_percent not in range(0, 101, 10):
            raise TopologyError(
                f"{where}: setpoint_percent must be 0-100 in steps of 10, got {ld.setpoint_percent}")
        if not 0.0 < ld.power_factor <= 1.0:
            raise TopologyError(f"{where}: power_factor must be in (0, 1]")
        if ld.rating_kva <= 0:
            raise TopologyError(f"{where}: rating_kva must be positive")
        loads.append(ld)
    if len({l.id for l in loads}) != len(loads):
        raise TopologyError("loads: duplicate id")

    # ids must be unique across the command-addressable namespaces
    addressable = [bk.id for bk in breakers] + [l.id for l in loads]
    if len(set(addressable)) != len(addressable):
        raise TopologyError("breaker and load ids must not collide")

    topo = GridTopology(
        buses=buses,
        branches=branches,
        breakers=breakers,
        sources=sources,
        loads=loads,
        s_base_kva=float(system.get("s_base_kva", 100.0)),
        v_nominal_ll=float(system.get("v_nominal_ll", 400.0)),
        f_nominal_hz=float(system.get("f_nominal_hz", 50.0)),
    )
    _check_connectivity(topo)
    return topo


def _check_connectivity(topo: GridTopology) -> None:
    """All breakers closed -> one component; every load reaches a source."""
    adj: dict[str, set[str]] = {b.id: set() for b in topo.buses}
    for br in topo.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {topo.buses[0].id}
    frontier = [topo.buses[0].id]
    while frontier:
        nxt = frontier.pop()
        for n in adj[nxt]:
            if n not in seen:
                seen.add(n)
                frontier.append(n)
    missing = [b.id for b in topo.buses if b.id not in seen]
    if missing:
        raise TopologyError(f"graph not connected with all breakers closed: unreachable {missing}")
    if not topo.sources:
        raise TopologyError("sources: no sources")
    # connected graph + >=1 source => every load reachable; keep the explicit
    # guard anyway for future multi-component documents
    source_buses = {s.bus for s in topo.sources}
    if not source_buses & seen:
        raise TopologyError("no source attached to the connected graph")


def load_topology_file(path: str) -> GridTopology:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return load_topology(doc)


_DEFAULT_CACHE: dict | None = None


def default_topology_doc() -> dict:
    """The in-repo default document (deep copy, safe to mutate)."""
    global _DEFAULT_CACHE
    if _DEFAULT_CACHE is None:
        text = resources.files("gridtwin.configs").joinpath("topology.yaml").read_text("utf-8")
        _DEFAULT_CACHE = yaml.safe_load(text)
    return copy.deepcopy(_DEFAULT_CACHE)


def default_topology() -> GridTopology:
    return load_topology(default_topology_doc())
