"""Scripted attack scenarios: ordered, triggered install/remove steps.

A scenario is a list of steps, each pairing a trigger with an attack action:

- ``immediate`` — do it now.
- ``after(ms)`` — wait, then do it.
- ``on_command(tag)`` — arm a switch-resident watch that installs the
  attack's rules the moment a matching operator write transits the fabric.
  The firing happens on the switch's routing path, atomically with frame
  processing, so the very first poll after the command already sees the
  forged view.

The built-in ``pump_stays_on`` scenario reproduces the classic hidden-load
attack end to end: the operator's OFF command is flipped to ON in flight,
the acknowledgement and set-point reads echo OFF, and the moment the command
is seen, status and measurement spoofs snap in so the supervisory view shows
a dead feeder while the process keeps drawing power.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import yaml

from gridtwin.sploit.attacks import (
    AttackSpec,
    PlannedRule,
    Sploit,
    plan_rules,
    record_disconnected_profile,
)
from gridtwin.sploit.client import SploitError, SploitRuntimeError

TRIGGER_KINDS = ("immediate", "on_command", "after")
ACTIONS = ("install", "remove")


@dataclass(frozen=True)
class ScenarioStep:
    trigger: dict                     # {"kind": ..., ...}
    action: str                       # install | remove
    attack: AttackSpec | None = None  # install steps
    attack_id: str | None = None      # remove steps (or attack.attack_id)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise SploitError(f"step action must be one of {ACTIONS}, got {self.action!r}")
        kind = (self.trigger or {}).get("kind")
        if kind not in TRIGGER_KINDS:
            raise SploitError(f"trigger kind must be one of {TRIGGER_KINDS}, got {kind!r}")
        if kind == "after":
            ms = self.trigger.get("ms")
            if not isinstance(ms, (int, float)) or ms < 0:
                raise SploitError(f"after trigger needs ms >= 0, got {ms!r}")
        if kind == "on_command":
            if not isinstance(self.trigger.get("tag"), str):
                raise SploitError("on_command trigger needs a tag path")
            if self.action != "install":
                raise SploitError("on_command triggers can only install "
                                  "(switch watches install rules, never remove them)")
        if self.action == "install" and self.attack is None:
            raise SploitError("install step needs an attack spec")
        if self.action == "remove" and self.resolved_attack_id is None:
            raise SploitError("remove step needs an attack_id")

    @property
    def resolved_attack_id(self) -> str | None:
        if self.attack_id is not None:
            return self.attack_id
        return self.attack.attack_id if self.attack is not None else None

    @staticmethod
    def from_dict(obj: dict) -> "ScenarioStep":
        if not isinstance(obj, dict):
            raise SploitError("scenario step must be a mapping")
        unknown = set(obj) - {"trigger", "action", "attack", "attack_id"}
        if unknown:
            raise SploitError(f"unknown step fields {sorted(unknown)}")
        attack = obj.get("attack")
        return ScenarioStep(
            trigger=obj.get("trigger") or {},
            action=obj.get("action", ""),
            attack=AttackSpec.from_dict(attack) if attack is not None else None,
            attack_id=obj.get("attack_id"),
        )


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    steps: tuple[ScenarioStep, ...]
    description: str = ""

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise SploitError("scenario needs a non-empty name")
        installed: set[str] = set()
        for i, step in enumerate(self.steps):
            aid = step.resolved_attack_id
            if step.action == "install":
                if aid in installed:
                    raise SploitError(
                        f"step {i}: attack id {aid!r} installed twice")
                installed.add(aid)
            elif aid not in installed:
                raise SploitError(
                    f"step {i}: remove of {aid!r} precedes its install")

    @staticmethod
    def from_dict(obj: dict) -> "ScenarioScript":
        if not isinstance(obj, dict):
            raise SploitError("scenario must be a mapping")
        unknown = set(obj) - {"name", "description", "steps"}
        if unknown:
            raise SploitError(f"unknown scenario fields {sorted(unknown)}")
        steps_raw = obj.get("steps")
        if not isinstance(steps_raw, list):
            raise SploitError("scenario needs a steps list")
        return ScenarioScript(
            name=obj.get("name", ""),
            description=obj.get("description", ""),
            steps=tuple(ScenarioStep.from_dict(s) for s in steps_raw),
        )


def load_scenario_file(path: str) -> ScenarioScript:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SploitError(f"cannot parse scenario file {path}: {exc}") from exc
    return ScenarioScript.from_dict(doc)


# ----------------------------------------------------------------------
# Execution
# ----------------------------------------------------------------------


@dataclass
class _Armed:
    """An on_command step that has been armed but fires switch-side."""
    watch_switch: str
    watch_id: str
    planned: list[PlannedRule]


@dataclass
class ScenarioRun:
    """Outcome of one scenario execution, with live rule state on demand."""
    script: ScenarioScript
    sploit: Sploit
    started_ts: float = field(default_factory=time.time)
    finished_ts: float | None = None
    ok: bool = True
    error: str | None = None
    events: list[dict] = field(default_factory=list)
    rule_ids: set[tuple[str, str]] = field(default_factory=set)
    watch_ids: set[tuple[str, str]] = field(default_factory=set)

    def log(self, **event) -> None:
        self.events.append({"ts": time.time(), **event})

    def report(self) -> dict:
        """Snapshot for files and assertions: events plus live hit counts."""
        rules = [r for r in self.sploit.client.rules()
                 if (r["switch"], r["rule_id"]) in self.rule_ids]
        watches = [w for w in self.sploit.client.watches()
                   if (w["switch"], w["watch_id"]) in self.watch_ids]
        return {
            "scenario": self.script.name,
            "description": self.script.description,
            "started_ts": self.started_ts,
            "finished_ts": self.finished_ts,
            "ok": self.ok,
            "error": self.error,
            "events": list(self.events),
            "live_rules": rules,
            "live_watches": watches,
        }


def validate_scenario(sploit: Sploit, script: ScenarioScript) -> None:
    """Every step must be executable before anything is installed."""
    for i, step in enumerate(script.steps):
        if step.action != "install":
            continue
        try:
            plan_rules(step.attack, sploit.targets, sploit.client_id)
        except SploitError as exc:
            raise SploitError(f"step {i}: {exc}") from exc
        kind = step.trigger["kind"]
        if kind == "on_command":
            point = sploit.targets.get(step.trigger["tag"])
            if point.kind != "control":
                raise SploitError(
                    f"step {i}: on_command tag {point.path} is a {point.kind} "
                    f"point, triggers watch operator writes to control points")
            watch_switch = step.trigger.get("switch", sploit.targets.scada_switch)
            if watch_switch not in point.candidate_switches:
                raise SploitError(
                    f"step {i}: watch switch {watch_switch!r} is not on the "
                    f"command path (candidates: {list(point.candidate_switches)})")


def execute_scenario(sploit: Sploit, script: ScenarioScript) -> ScenarioRun:
    """Run the steps in order; a failing step removes everything installed."""
    validate_scenario(sploit, script)
    run = ScenarioRun(script=script, sploit=sploit)
    handles = {}
    armed: dict[str, _Armed] = {}

    def rollback() -> None:
        for handle in handles.values():
            handle.stop()
        for arm in armed.values():
            try:
                sploit.client.unwatch(arm.watch_switch, arm.watch_id)
            except SploitRuntimeError:
                pass
            for pr in arm.planned:
                try:
                    sploit.client.remove(pr.switch, pr.rule_id)
                except SploitRuntimeError:
                    pass

    for i, step in enumerate(script.steps):
        kind = step.trigger["kind"]
        try:
            if kind == "after":
                sploit.waiter(float(step.trigger["ms"]))

            if step.action == "install" and kind == "on_command":
                planned = plan_rules(step.attack, sploit.targets, sploit.client_id)
                point = sploit.targets.get(step.trigger["tag"])
                watch_switch = step.trigger.get("switch", sploit.targets.scada_switch)
                watch_id = sploit.client.watch(
                    watch_switch,
                    {"msg_type": "WriteReq", "dst_ip": point.device_ip,
                     "path_glob": point.path},
                    [{"switch": pr.switch, "rule": dict(pr.rule, rule_id=pr.rule_id)}
                     for pr in planned],
                    client=sploit.client_id)
                armed[step.attack.attack_id] = _Armed(watch_switch, watch_id, planned)
                run.watch_ids.add((watch_switch, watch_id))
                run.rule_ids.update((pr.switch, pr.rule_id) for pr in planned)
                run.log(step=i, action="install", trigger=kind,
                        attack_id=step.attack.attack_id,
                        armed_on=watch_switch, watch_id=watch_id,
                        rules=[{"switch": pr.switch, "rule_id": pr.rule_id}
                               for pr in planned])

            elif step.action == "install":
                handle = sploit.launch(step.attack)
                handles[handle.attack_id] = handle
                run.rule_ids.update(handle.rules)
                run.log(step=i, action="install", trigger=kind,
                        attack_id=handle.attack_id,
                        rules=[{"switch": s, "rule_id": r}
                               for s, r in handle.rules])

            else:  # remove
                aid = step.resolved_attack_id
                removed = 0
                handle = handles.pop(aid, None)
                if handle is not None:
                    removed += handle.stop()
                    sploit._handles.pop(aid, None)
                arm = armed.pop(aid, None)
                if arm is not None:
                    try:
                        if sploit.client.unwatch(arm.watch_switch, arm.watch_id):
                            removed += 1
                    except SploitRuntimeError:
                        pass
                    for pr in arm.planned:   # fired watches left real rules
                        if sploit.client.remove(pr.switch, pr.rule_id):
                            removed += 1
                run.log(step=i, action="remove", trigger=kind,
                        attack_id=aid, removed=removed)

        except (SploitError, SploitRuntimeError) as exc:
            rollback()
            run.ok = False
            run.error = f"step {i}: {exc}"
            run.log(step=i, action="abort", error=str(exc))
            break

    run.finished_ts = time.time()
    return run


# ----------------------------------------------------------------------
# Built-in scenario: the hidden-load case study
# ----------------------------------------------------------------------

PUMP_COMMAND = "SPLC/CSWI_Q4_1.Oper"
PUMP_STATUS = "SIED1/XCBR_Q4_1.stVal"
PUMP_BREAKER = "Q4_1"
PUMP_MEASUREMENTS = (
    "SIED1/MMXU1.PhV",
    "SIED1/MMXU1.A",
    "SIED1/MMXU1.TotW",
    "SIED1/MMXU1.TotVAr",
    "SIED1/MMXU1.Hz",
)


def build_pump_stays_on(*, roster=None, profile: dict[str, list[float]] | None = None,
                        rehearse_ms: float = 10_000.0) -> ScenarioScript:
    """The hidden-load scenario: operator turns the pump OFF, it stays ON.

    Step 1 (immediate) arms command interception: the write the feeder PLC
    receives says close, while the acknowledgement and every later set-point
    read echo the operator's OFF.  Step 2 arms a watch on the operator's
    command; the moment it transits the control-room switch, breaker status
    and feeder measurements snap to a rehearsed disconnected profile.  The
    supervisory view goes quiet and internally consistent while the load
    keeps drawing power.
    """
    if profile is None:
        profile = record_disconnected_profile(
            PUMP_MEASUREMENTS, (PUMP_BREAKER,),
            duration_ms=rehearse_ms, roster=roster)
    keep_on = AttackSpec(
        attack_id="pump-keep-on",
        mode="intercept_command",
        targets=(PUMP_COMMAND,),
        payload={"execute": True, "echo": False},
    )
    hide_off = AttackSpec(
        attack_id="pump-hide-off",
        mode="composite",
        parts=(
            AttackSpec(
                attack_id="pump-hide-off.status",
                mode="spoof_status",
                targets=(PUMP_STATUS,),
                payload={"value": False},
            ),
            AttackSpec(
                attack_id="pump-hide-off.measurements",
                mode="spoof_measurement",
                targets=PUMP_MEASUREMENTS,
                payload={"profiles": profile, "period_ms": 100.0},
            ),
        ),
    )
    return ScenarioScript(
        name="pump_stays_on",
        description=(
            "Operator's OFF command executes as ON; status and measurements "
            "replay a rehearsed disconnected feeder the moment the command "
            "is seen."),
        steps=(
            ScenarioStep(trigger={"kind": "immediate"}, action="install",
                         attack=keep_on),
            ScenarioStep(trigger={"kind": "on_command", "tag": PUMP_COMMAND},
                         action="install", attack=hide_off),
        ),
    )


BUILTIN_SCENARIOS = {
    "pump_stays_on": build_pump_stays_on,
}
