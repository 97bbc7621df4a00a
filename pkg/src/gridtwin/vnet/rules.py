"""Interception rules evaluated by switches, first match wins.

A rule pairs a match (source/destination address, message type, object path
glob) with exactly one action: pass, drop, delay, rewrite the value field to
a constant, or rewrite it through a named transform.  Rewrites only apply to
frames that parse as device-protocol TLV; anything else passes unmodified.
"""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

from gridtwin.device import mmswire

logger = logging.getLogger(__name__)

ACTION_KINDS = ("pass", "drop", "delay", "rewrite_value", "rewrite_fn")


class RuleError(ValueError):
    pass


def value_to_json(value: mmswire.Value) -> dict:
    """Typed JSON wrapper so bool/int/float survive the control API."""
    if isinstance(value, bool):
        return {"type": "bool", "v": value}
    if isinstance(value, float):
        return {"type": "f64", "v": value}
    if isinstance(value, int):
        return {"type": "i64", "v": value}
    if isinstance(value, str):
        return {"type": "utf8", "v": value}
    raise RuleError(f"unsupported value type {type(value).__name__}")


def value_from_json(obj: Any) -> mmswire.Value:
    if not isinstance(obj, dict) or "type" not in obj or "v" not in obj:
        raise RuleError(f"typed value must be {{type, v}}, got {obj!r}")
    t, v = obj["type"], obj["v"]
    if t == "bool":
        return bool(v)
    if t == "f64":
        return float(v)
    if t == "i64":
        return int(v)
    if t == "utf8":
        return str(v)
    raise RuleError(f"unknown value type {t!r}")


# ----------------------------------------------------------------------
# Named transforms for rewrite_fn
# ----------------------------------------------------------------------

# name -> fn(msg, args, now_ms) -> replacement value
_TRANSFORMS: dict[str, Callable[[mmswire.MmsMessage, dict, float], mmswire.Value]] = {}


def register_transform(name: str, fn: Callable[[mmswire.MmsMessage, dict, float], mmswire.Value]) -> None:
    _TRANSFORMS[name] = fn


def transform_exists(name: str) -> bool:
    return name in _TRANSFORMS


def _coerce_like(original: mmswire.Value, new: Any) -> mmswire.Value:
    """Keep the value TLV's type tag stable across a rewrite."""
    if isinstance(original, bool):
        return bool(new)
    if isinstance(original, float):
        return float(new)
    if isinstance(original, int):
        return int(new)
    return str(new)


def _t_negate_bool(msg, args, now_ms):
    if not isinstance(msg.value, bool):
        raise RuleError("negate_bool needs a bool value")
    return not msg.value


def _t_scale(msg, args, now_ms):
    return _coerce_like(msg.value, msg.value * float(args["factor"]))


def _t_offset(msg, args, now_ms):
    return _coerce_like(msg.value, msg.value + float(args["delta"]))


def _t_replay_profile(msg, args, now_ms):
    """Cycle through a recorded value profile, one entry per period."""
    values = args["values"]
    if not values:
        raise RuleError("replay_profile needs a non-empty values list")
    period = float(args.get("period_ms", 100.0))
    t0 = float(args.get("t0_ms", 0.0))
    idx = int(max(0.0, now_ms - t0) // period) % len(values)
    return _coerce_like(msg.value, values[idx])


register_transform("negate_bool", _t_negate_bool)
register_transform("scale", _t_scale)
register_transform("offset", _t_offset)
register_transform("replay_profile", _t_replay_profile)


# ----------------------------------------------------------------------
# Match and action
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RuleMatch:
    src_ip: str | None = None
    dst_ip: str | None = None
    msg_type: int | None = None      # device-protocol message type
    path_glob: str | None = None     # fnmatch glob over the path field

    @staticmethod
    def from_dict(obj: dict) -> "RuleMatch":
        if not isinstance(obj, dict):
            raise RuleError("match must be a mapping")
        unknown = set(obj) - {"src_ip", "dst_ip", "msg_type", "path_glob"}
        if unknown:
            raise RuleError(f"unknown match fields {sorted(unknown)}")
        msg_type = obj.get("msg_type")
        if isinstance(msg_type, str):
            if msg_type not in mmswire.MSG_BY_NAME:
                raise RuleError(f"unknown msg_type {msg_type!r}")
            msg_type = mmswire.MSG_BY_NAME[msg_type]
        if msg_type is not None and msg_type not in mmswire.MSG_TYPES:
            raise RuleError(f"unknown msg_type {msg_type!r}")
        path_glob = obj.get("path_glob")
        if path_glob is not None and not isinstance(path_glob, str):
            raise RuleError("path_glob must be a string")
        return RuleMatch(
            src_ip=obj.get("src_ip"),
            dst_ip=obj.get("dst_ip"),
            msg_type=msg_type,
            path_glob=path_glob,
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.src_ip is not None:
            out["src_ip"] = self.src_ip
        if self.dst_ip is not None:
            out["dst_ip"] = self.dst_ip
        if self.msg_type is not None:
            out["msg_type"] = mmswire.MSG_NAMES[self.msg_type]
        if self.path_glob is not None:
            out["path_glob"] = self.path_glob
        return out

    def matches(self, src_ip: str, dst_ip: str, msg: mmswire.MmsMessage | None) -> bool:
        if self.src_ip is not None and src_ip != self.src_ip:
            return False
        if self.dst_ip is not None and dst_ip != self.dst_ip:
            return False
        if self.msg_type is not None:
            if msg is None or msg.msg_type != self.msg_type:
                return False
        if self.path_glob is not None:
            if msg is None or msg.path is None:
                return False
            if not fnmatch.fnmatchcase(msg.path, self.path_glob):
                return False
        return True


@dataclass(frozen=True)
class RuleAction:
    kind: str
    delay_ms: float = 0.0
    value: mmswire.Value | None = None   # rewrite_value
    fn_name: str | None = None           # rewrite_fn
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise RuleError(f"unknown action kind {self.kind!r}")
        if self.kind == "delay" and self.delay_ms < 0:
            raise RuleError("delay must be >= 0 ms")
        if self.kind == "rewrite_value" and self.value is None:
            raise RuleError("rewrite_value needs a value")
        if self.kind == "rewrite_fn":
            if not self.fn_name or not transform_exists(self.fn_name):
                raise RuleError(f"unknown transform {self.fn_name!r}")

    @staticmethod
    def from_dict(obj: dict) -> "RuleAction":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise RuleError("action must be a mapping with a kind")
        kind = obj["kind"]
        if kind == "delay":
            return RuleAction(kind, delay_ms=float(obj.get("ms", 0.0)))
        if kind == "rewrite_value":
            return RuleAction(kind, value=value_from_json(obj.get("value")))
        if kind == "rewrite_fn":
            return RuleAction(kind, fn_name=obj.get("name"), args=obj.get("args") or {})
        return RuleAction(kind)

    def to_dict(self) -> dict:
        if self.kind == "delay":
            return {"kind": "delay", "ms": self.delay_ms}
        if self.kind == "rewrite_value":
            return {"kind": "rewrite_value", "value": value_to_json(self.value)}
        if self.kind == "rewrite_fn":
            return {"kind": "rewrite_fn", "name": self.fn_name, "args": self.args}
        return {"kind": self.kind}


@dataclass
class InterceptRule:
    rule_id: str
    match: RuleMatch
    action: RuleAction
    installed_by: str = ""
    hit_count: int = 0

    @staticmethod
    def from_dict(obj: dict, rule_id: str, installed_by: str = "") -> "InterceptRule":
        return InterceptRule(
            rule_id=rule_id,
            match=RuleMatch.from_dict(obj.get("match") or {}),
            action=RuleAction.from_dict(obj.get("action") or {}),
            installed_by=installed_by,
        )

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "match": self.match.to_dict(),
            "action": self.action.to_dict(),
            "hit_count": self.hit_count,
            "installed_by": self.installed_by,
        }

    def apply(self, payload: bytes, msg: mmswire.MmsMessage | None,
              now_ms: float) -> tuple[str, bytes, float]:
        """Return (verdict, payload, extra_delay_ms); verdict pass|drop."""
        self.hit_count += 1
        act = self.action
        if act.kind == "pass":
            return "pass", payload, 0.0
        if act.kind == "drop":
            return "drop", payload, 0.0
        if act.kind == "delay":
            return "pass", payload, act.delay_ms
        # rewrites: only on frames whose TLV parses and that carry a value
        if msg is None or msg.value is None:
            return "pass", payload, 0.0
        try:
            if act.kind == "rewrite_value":
                new_value = act.value
            else:
                new_value = _TRANSFORMS[act.fn_name](msg, act.args, now_ms)
            return "pass", mmswire.replace_value(payload, new_value), 0.0
        except (RuleError, ValueError, KeyError, TypeError) as exc:
            logger.warning("rule %s rewrite failed, passing frame: %s", self.rule_id, exc)
            return "pass", payload, 0.0
