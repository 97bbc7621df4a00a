"""Switched message fabric.

Switches form a ring plus spurs; redundant ring links are present in the
config but marked standby, so the active links form a spanning tree and every
(source, destination) pair has exactly one switch path.  Each switch applies
its ordered rule chain to every transiting frame; captures tap frames at
ingress (pre-rules) and egress (post-rules).
"""

from __future__ import annotations

import copy
import itertools
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable

import yaml

from gridtwin.device import mmswire
from gridtwin.runtime import Engine
from gridtwin.vnet.rules import InterceptRule, RuleError, RuleMatch

logger = logging.getLogger(__name__)

CAPTURE_LIMIT = 65536


class FabricError(ValueError):
    pass


@dataclass(frozen=True)
class DeliveredFrame:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    payload: bytes
    ts_ms: float


@dataclass(frozen=True)
class Endpoint:
    ip: str
    port: int
    switch_id: str
    handler: Callable[[DeliveredFrame], None] | None = field(compare=False, default=None)


@dataclass(frozen=True)
class CaptureRecord:
    direction: str        # "ingress" | "egress"
    ts_ms: float
    switch_id: str
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    payload: bytes


@dataclass
class Watch:
    """Fire-once trigger: when a matching frame transits the switch, install
    the listed rules atomically (the resident attack-script pattern)."""
    watch_id: str
    switch_id: str
    match: RuleMatch
    installs: list[tuple[str, dict]]  # (switch_id, rule dict)
    installed_by: str = ""
    fired: bool = False


class SwitchNode:
    def __init__(self, switch_id: str, launcher_enabled: bool = True):
        self.id = switch_id
        self.launcher_enabled = launcher_enabled
        self.rules: list[InterceptRule] = []
        self.watches: list[Watch] = []
        self.frames_seen = 0
        self.drops = 0
        self.capture: deque[CaptureRecord] = deque(maxlen=CAPTURE_LIMIT)


def default_network_doc() -> dict:
    text = resources.files("gridtwin.configs").joinpath("network.yaml").read_text("utf-8")
    return yaml.safe_load(text)


class Fabric:
    """Builds the switch graph and routes frames along static tree paths."""

    def __init__(self, doc: dict | None = None, engine: Engine | None = None):
        self.engine = engine
        doc = copy.deepcopy(doc) if doc is not None else default_network_doc()
        self._lock = threading.Lock()
        self._rule_seq = itertools.count(1)
        self._watch_seq = itertools.count(1)
        self.switches: dict[str, SwitchNode] = {}
        self._endpoints: dict[tuple[str, int], Endpoint] = {}
        self._groups: dict[tuple[str, int], list[Endpoint]] = {}
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.unreachable = 0

        for raw in doc.get("switches") or []:
            sid = raw["id"]
            if sid in self.switches:
                raise FabricError(f"duplicate switch {sid}")
            self.switches[sid] = SwitchNode(sid, bool(raw.get("launcher_enabled", True)))
        if not self.switches:
            raise FabricError("no switches configured")

        self.links: list[tuple[str, str, bool]] = []
        active_adj: dict[str, set[str]] = {sid: set() for sid in self.switches}
        for raw in doc.get("links") or []:
            a, b = raw["a"], raw["b"]
            for end in (a, b):
                if end not in self.switches:
                    raise FabricError(f"link references unknown switch {end!r}")
            active = bool(raw.get("active", True))
            self.links.append((a, b, active))
            if active:
                active_adj[a].add(b)
                active_adj[b].add(a)

        self._parent = self._validate_tree(active_adj)

        self._prefixes: list[tuple[str, str]] = []
        for raw in doc.get("attachments") or []:
            prefix, sid = raw["prefix"], raw["switch"]
            if sid not in self.switches:
                raise FabricError(f"attachment prefix {prefix!r} names unknown switch {sid!r}")
            self._prefixes.append((prefix, sid))
        self._prefixes.sort(key=lambda p: -len(p[0]))  # longest prefix first

    # ------------------------------------------------------------------
    # topology
    # ------------------------------------------------------------------

    def _validate_tree(self, adj: dict[str, set[str]]) -> dict[str, str]:
        """Active links must span all switches with unique paths (a tree)."""
        ids = sorted(self.switches)
        n_active = sum(len(peers) for peers in adj.values()) // 2
        parent: dict[str, str] = {}
        seen = {ids[0]}
        frontier = [ids[0]]
        while frontier:
            cur = frontier.pop(0)
            for peer in sorted(adj[cur]):
                if peer in seen:
                    continue
                seen.add(peer)
                parent[peer] = cur
                frontier.append(peer)
        missing = [s for s in ids if s not in seen]
        if missing:
            raise FabricError(f"no active path to switch(es) {missing}")
        if n_active != len(ids) - 1:
            # a cycle among active links means at least one destination has
            # two candidate paths
            for a, b, active in self.links:
                if active and parent.get(a) != b and parent.get(b) != a:
                    raise FabricError(
                        f"ambiguous route to {b}: redundant active link {a}-{b} "
                        f"(mark it standby)")
            raise FabricError("active links contain a cycle")
        return parent

    def path(self, src: str, dst: str, parent: dict[str, str] | None = None) -> list[str]:
        """Switch sequence from src to dst along the active tree."""
        parent = parent if parent is not None else self._parent
        def to_root(s: str) -> list[str]:
            chain = [s]
            while chain[-1] in parent:
                chain.append(parent[chain[-1]])
            return chain
        up_src = to_root(src)
        up_dst = to_root(dst)
        common = None
        dst_index = {s: i for i, s in enumerate(up_dst)}
        for i, s in enumerate(up_src):
            if s in dst_index:
                common = (i, dst_index[s])
                break
        assert common is not None, "tree guarantees a common ancestor"
        i, j = common
        return up_src[:i + 1] + list(reversed(up_dst[:j]))

    def switch_for_ip(self, ip: str) -> str:
        for prefix, sid in self._prefixes:
            if ip.startswith(prefix):
                return sid
        raise FabricError(f"no switch attachment configured for ip {ip!r}")

    # ------------------------------------------------------------------
    # endpoints
    # ------------------------------------------------------------------

    def attach(self, ip: str, port: int,
               handler: Callable[[DeliveredFrame], None] | None = None,
               switch_id: str | None = None) -> Endpoint:
        sid = switch_id if switch_id is not None else self.switch_for_ip(ip)
        if sid not in self.switches:
            raise FabricError(f"unknown switch {sid!r}")
        ep = Endpoint(ip, int(port), sid, handler)
        with self._lock:
            if (ep.ip, ep.port) in self._endpoints:
                raise FabricError(f"address {ip}:{port} already attached")
            self._endpoints[(ep.ip, ep.port)] = ep
        return ep

    def detach(self, ep: Endpoint) -> None:
        with self._lock:
            self._endpoints.pop((ep.ip, ep.port), None)
            for members in self._groups.values():
                if ep in members:
                    members.remove(ep)

    def join_group(self, ep: Endpoint, group_ip: str, port: int) -> None:
        with self._lock:
            members = self._groups.setdefault((group_ip, int(port)), [])
            if ep not in members:
                members.append(ep)
                members.sort(key=lambda e: (e.ip, e.port))

    # ------------------------------------------------------------------
    # frame transit
    # ------------------------------------------------------------------

    def send(self, src: Endpoint, dst_ip: str, dst_port: int, payload: bytes) -> str:
        """Route a frame; returns "delivered", "dropped" or "unreachable"."""
        with self._lock:
            group = list(self._groups.get((dst_ip, int(dst_port)), ()))
            dst = self._endpoints.get((dst_ip, int(dst_port)))
        if group:
            outcome = "unreachable"
            for member in group:
                if member.ip == src.ip and member.port == src.port:
                    continue
                one = self._transit(src, member, dst_ip, dst_port, payload)
                if one == "delivered" or (one == "dropped" and outcome != "delivered"):
                    outcome = one
            return outcome
        if dst is None:
            with self._lock:
                self.sent += 1
                self.unreachable += 1
            return "unreachable"
        return self._transit(src, dst, dst_ip, dst_port, payload)

    def _transit(self, src: Endpoint, dst: Endpoint,
                 dst_ip: str, dst_port: int, payload: bytes) -> str:
        with self._lock:
            self.sent += 1
        now = self.engine.now_ms() if self.engine else 0.0
        delay_ms = 0.0
        path = self.path(src.switch_id, dst.switch_id) if src.switch_id != dst.switch_id \
            else [src.switch_id]
        for sid in path:
            sw = self.switches[sid]
            sw.capture.append(CaptureRecord(
                "ingress", now, sid, src.ip, src.port, dst_ip, dst_port, payload))
            verdict, payload, extra = self._apply_switch(sw, src.ip, dst_ip, payload, now)
            delay_ms += extra
            with self._lock:
                sw.frames_seen += 1
                if verdict == "drop":
                    sw.drops += 1
                    self.dropped += 1
            if verdict == "drop":
                return "dropped"
            sw.capture.append(CaptureRecord(
                "egress", now, sid, src.ip, src.port, dst_ip, dst_port, payload))
        frame = DeliveredFrame(src.ip, src.port, dst_ip, dst_port, payload, now + delay_ms)
        with self._lock:
            self.delivered += 1
        if dst.handler is None:
            logger.warning("endpoint %s:%s has no handler; frame discarded", dst.ip, dst.port)
        elif self.engine is not None:
            if delay_ms > 0:
                self.engine.call_after(delay_ms, dst.handler, frame)
            else:
                self.engine.call_soon(dst.handler, frame)
        else:
            dst.handler(frame)
        return "delivered"

    def _apply_switch(self, sw: SwitchNode, src_ip: str, dst_ip: str,
                      payload: bytes, now_ms: float) -> tuple[str, bytes, float]:
        with self._lock:
            rules = list(sw.rules)
            watches = [w for w in sw.watches if not w.fired]
        msg = mmswire.try_decode(payload)
        for watch in watches:
            if watch.match.matches(src_ip, dst_ip, msg):
                self._fire_watch(watch)
        for rule in rules:
            if rule.match.matches(src_ip, dst_ip, msg):
                verdict, payload, extra = rule.apply(payload, msg, now_ms)
                return verdict, payload, extra
        return "pass", payload, 0.0

    def _fire_watch(self, watch: Watch) -> None:
        with self._lock:
            if watch.fired:
                return
            watch.fired = True
            for sid, rule_dict in watch.installs:
                sw = self.switches[sid]
                rule_id = rule_dict.get("rule_id") or f"r{next(self._rule_seq)}"
                rule = InterceptRule.from_dict(rule_dict, rule_id, watch.installed_by)
                sw.rules.append(rule)
        logger.info("watch %s fired on %s: installed %d rule(s)",
                    watch.watch_id, watch.switch_id, len(watch.installs))

    # ------------------------------------------------------------------
    # launcher surface
    # ------------------------------------------------------------------

    def _launcher_switch(self, switch_id: str) -> SwitchNode:
        if switch_id not in self.switches:
            raise FabricError(f"unknown switch {switch_id!r}")
        sw = self.switches[switch_id]
        if not sw.launcher_enabled:
            raise FabricError(f"launcher disabled on switch {switch_id}")
        return sw

    def install_rule(self, switch_id: str, rule_dict: dict, installed_by: str = "") -> str:
        sw = self._launcher_switch(switch_id)
        with self._lock:
            rule_id = rule_dict.get("rule_id") or f"r{next(self._rule_seq)}"
            if any(r.rule_id == rule_id for r in sw.rules):
                raise RuleError(f"rule id {rule_id!r} already installed on {switch_id}")
            rule = InterceptRule.from_dict(rule_dict, rule_id, installed_by)
            sw.rules.append(rule)
        return rule_id

    def remove_rule(self, switch_id: str, rule_id: str) -> bool:
        if switch_id not in self.switches:
            raise FabricError(f"unknown switch {switch_id!r}")
        sw = self.switches[switch_id]
        with self._lock:
            before = len(sw.rules)
            sw.rules = [r for r in sw.rules if r.rule_id != rule_id]
            return len(sw.rules) != before

    def list_rules(self, switch_id: str | None = None) -> list[dict]:
        with self._lock:
            out = []
            for sid in sorted(self.switches):
                if switch_id is not None and sid != switch_id:
                    continue
                for rule in self.switches[sid].rules:
                    entry = rule.to_dict()
                    entry["switch"] = sid
                    out.append(entry)
            return out

    def install_watch(self, switch_id: str, match_dict: dict,
                      installs: list[dict], installed_by: str = "") -> str:
        sw = self._launcher_switch(switch_id)
        parsed: list[tuple[str, dict]] = []
        for item in installs:
            target = item.get("switch")
            rule_dict = item.get("rule")
            self._launcher_switch(target)  # validates existence + enablement
            InterceptRule.from_dict(rule_dict, "probe")  # validates shape now
            parsed.append((target, rule_dict))
        with self._lock:
            watch_id = f"w{next(self._watch_seq)}"
            sw.watches.append(Watch(
                watch_id=watch_id,
                switch_id=switch_id,
                match=RuleMatch.from_dict(match_dict),
                installs=parsed,
                installed_by=installed_by,
            ))
        return watch_id

    def remove_watch(self, switch_id: str, watch_id: str) -> bool:
        if switch_id not in self.switches:
            raise FabricError(f"unknown switch {switch_id!r}")
        sw = self.switches[switch_id]
        with self._lock:
            before = len(sw.watches)
            sw.watches = [w for w in sw.watches if w.watch_id != watch_id]
            return len(sw.watches) != before

    def list_watches(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "watch_id": w.watch_id,
                    "switch": w.switch_id,
                    "match": w.match.to_dict(),
                    "fired": w.fired,
                    "installs": len(w.installs),
                    "installed_by": w.installed_by,
                }
                for sid in sorted(self.switches)
                for w in self.switches[sid].watches
            ]

    # ------------------------------------------------------------------
    # observation
    # ------------------------------------------------------------------

    def capture(self, switch_id: str, match: RuleMatch | None = None,
                direction: str | None = None) -> list[CaptureRecord]:
        if switch_id not in self.switches:
            raise FabricError(f"unknown switch {switch_id!r}")
        records = list(self.switches[switch_id].capture)
        out = []
        for rec in records:
            if direction is not None and rec.direction != direction:
                continue
            if match is not None:
                msg = mmswire.try_decode(rec.payload)
                if not match.matches(rec.src_ip, rec.dst_ip, msg):
                    continue
            out.append(rec)
        return out

    def stats(self) -> dict[str, Any]:
        with self._lock:
            return {
                "fabric": {
                    "sent": self.sent,
                    "delivered": self.delivered,
                    "dropped": self.dropped,
                    "unreachable": self.unreachable,
                },
                "switches": {
                    sid: {
                        "frames_seen": sw.frames_seen,
                        "drops": sw.drops,
                        "rules": len(sw.rules),
                        "captured": len(sw.capture),
                    }
                    for sid, sw in sorted(self.switches.items())
                },
            }
