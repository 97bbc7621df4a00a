"""Scripted experiments over a running twin.

A script is a YAML list of steps — wait, write, scenario, attack,
stop_attacks, capture, check — executed in order against one twin.  Every
run produces a self-contained evidence bundle: the step log, the operator
command ledger, a historian export, packet captures, and any adversary
reports.  A failing step stops the run; the bundle is marked failed at
that step and keeps every artifact gathered up to it.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path, PurePosixPath

import yaml

from gridtwin.sploit.attacks import AttackSpec, Sploit
from gridtwin.sploit.client import SploitError, SploitRuntimeError
from gridtwin.sploit.scenario import BUILTIN_SCENARIOS, load_scenario_file
from gridtwin.vnet.pcap import write_pcap

logger = logging.getLogger(__name__)

STEP_KINDS = ("wait", "write", "scenario", "attack", "stop_attacks",
              "capture", "check")
BUILTIN_EXPERIMENTS = ("case_study",)

_TRUTH_FIELDS = ("voltage_ll", "current_a", "p_kw", "q_kvar", "frequency_hz")


class ExperimentError(ValueError):
    """Script malformed, or a check/step failed during the run."""


# ----------------------------------------------------------------------
# script model
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentScript:
    name: str
    steps: tuple = ()
    description: str = ""
    base_dir: str = "."          # scenario files resolve relative to this

    @staticmethod
    def from_dict(doc: dict, base_dir: str = ".") -> "ExperimentScript":
        if not isinstance(doc, dict):
            raise ExperimentError("experiment must be a mapping")
        unknown = set(doc) - {"name", "description", "steps"}
        if unknown:
            raise ExperimentError(f"unknown experiment fields {sorted(unknown)}")
        name = doc.get("name")
        if not isinstance(name, str) or not name:
            raise ExperimentError("experiment needs a non-empty 'name'")
        raw_steps = doc.get("steps", [])
        if raw_steps is None:
            raw_steps = []
        if not isinstance(raw_steps, list):
            raise ExperimentError("'steps' must be a list")
        steps = []
        for i, raw in enumerate(raw_steps):
            if not isinstance(raw, dict) or len(raw) != 1:
                raise ExperimentError(
                    f"step {i} must be a single-key mapping like 'wait: ...', "
                    f"got {raw!r}")
            kind, body = next(iter(raw.items()))
            if kind not in STEP_KINDS:
                raise ExperimentError(
                    f"step {i}: unknown step kind {kind!r} "
                    f"(expected one of {', '.join(STEP_KINDS)})")
            steps.append((kind, _validate_step(kind, body, i)))
        return ExperimentScript(name=name, steps=tuple(steps),
                                description=str(doc.get("description") or "").strip(),
                                base_dir=base_dir)


def _validate_step(kind: str, body, i: int):
    where = f"step {i} ({kind})"
    if kind == "wait":
        if isinstance(body, dict):
            body = body.get("ms")
        if not isinstance(body, (int, float)) or isinstance(body, bool) or body < 0:
            raise ExperimentError(f"{where}: needs a non-negative 'ms'")
        return {"ms": float(body)}
    if kind == "write":
        if not isinstance(body, dict) or not isinstance(body.get("tag"), str) \
                or "value" not in body:
            raise ExperimentError(f"{where}: needs 'tag' and 'value'")
        extra = set(body) - {"tag", "value", "operator"}
        if extra:
            raise ExperimentError(f"{where}: unknown fields {sorted(extra)}")
        return {"tag": body["tag"], "value": body["value"],
                "operator": str(body.get("operator", "operator"))}
    if kind == "scenario":
        if isinstance(body, str):
            if body not in BUILTIN_SCENARIOS:
                raise ExperimentError(
                    f"{where}: {body!r} is not a built-in scenario "
                    f"(have {sorted(BUILTIN_SCENARIOS)})")
            return {"builtin": body}
        if isinstance(body, dict) and isinstance(body.get("file"), str):
            return {"file": body["file"]}
        raise ExperimentError(f"{where}: needs a built-in name or {{file: ...}}")
    if kind == "attack":
        if not isinstance(body, dict):
            raise ExperimentError(f"{where}: needs an attack description")
        try:
            AttackSpec.from_dict(body)
        except SploitError as exc:
            raise ExperimentError(f"{where}: {exc}") from exc
        return dict(body)
    if kind == "stop_attacks":
        if body not in (None, {}):
            raise ExperimentError(f"{where}: takes no arguments")
        return {}
    if kind == "capture":
        if not isinstance(body, dict) or not isinstance(body.get("switch"), str) \
                or not isinstance(body.get("file"), str):
            raise ExperimentError(f"{where}: needs 'switch' and 'file'")
        rel = PurePosixPath(body["file"])
        if rel.is_absolute() or ".." in rel.parts:
            raise ExperimentError(
                f"{where}: 'file' must be a relative path inside the bundle")
        return {"switch": body["switch"], "file": body["file"]}
    if kind == "check":
        if not isinstance(body, list) or not body:
            raise ExperimentError(f"{where}: needs a non-empty list of clauses")
        return {"that": [_validate_clause(c, where) for c in body]}
    raise AssertionError(kind)


_CLAUSE_SHAPES = {
    "tag": {"equals", "min", "max", "quality"},
    "truth_bus": {"field", "equals", "min", "max"},
    "truth_breaker": {"closed"},
    "all_quality": set(),
    "command": {"outcome", "observed"},
}


def _validate_clause(clause, where: str) -> dict:
    if not isinstance(clause, dict):
        raise ExperimentError(f"{where}: clause must be a mapping, got {clause!r}")
    selectors = [k for k in _CLAUSE_SHAPES if k in clause]
    if len(selectors) != 1:
        raise ExperimentError(
            f"{where}: clause needs exactly one of {sorted(_CLAUSE_SHAPES)}, "
            f"got {clause!r}")
    sel = selectors[0]
    extra = set(clause) - _CLAUSE_SHAPES[sel] - {sel}
    if extra:
        raise ExperimentError(f"{where}: unknown clause fields {sorted(extra)}")
    comparators = set(clause) & (_CLAUSE_SHAPES[sel] - {"field", "closed"})
    if sel == "tag" and not comparators:
        raise ExperimentError(f"{where}: tag clause needs a comparison")
    if sel == "truth_bus":
        if clause.get("field") not in _TRUTH_FIELDS:
            raise ExperimentError(
                f"{where}: truth_bus needs 'field' in {_TRUTH_FIELDS}")
        if not comparators:
            raise ExperimentError(f"{where}: truth_bus clause needs a comparison")
    if sel == "truth_breaker" and not isinstance(clause.get("closed"), bool):
        raise ExperimentError(f"{where}: truth_breaker needs a boolean 'closed'")
    if sel == "command":
        if clause["command"] != "last":
            raise ExperimentError(f"{where}: only 'command: last' is supported")
        if not comparators:
            raise ExperimentError(f"{where}: command clause needs a comparison")
    return dict(clause)


def load_experiment_file(path: str) -> ExperimentScript:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ExperimentError(f"experiment file does not exist: {path}") from exc
    except yaml.YAMLError as exc:
        raise ExperimentError(f"cannot parse experiment file: {exc}") from exc
    return ExperimentScript.from_dict(doc, base_dir=str(Path(path).parent))


def load_builtin_experiment(name: str) -> ExperimentScript:
    if name not in BUILTIN_EXPERIMENTS:
        raise ExperimentError(
            f"{name!r} is not a built-in experiment (have {BUILTIN_EXPERIMENTS})")
    text = resources.files("gridtwin.configs").joinpath(f"{name}.exp")\
        .read_text("utf-8")
    return ExperimentScript.from_dict(yaml.safe_load(text))


# ----------------------------------------------------------------------
# execution
# ----------------------------------------------------------------------

@dataclass
class _RunState:
    twin: object
    script: ExperimentScript
    outdir: Path
    sploit: Sploit | None = None
    artifacts: list = field(default_factory=list)

    def get_sploit(self) -> Sploit:
        if self.sploit is None:
            twin = self.twin
            self.sploit = Sploit(
                (twin.cfg.host, twin.ports["launcher"]),
                roster=twin.roster,
                client_id="exp",
                waiter=twin.wait,
            )
        return self.sploit


def run_experiment(twin, script: ExperimentScript, outdir) -> dict:
    """Execute ``script`` against a running twin; write the bundle to
    ``outdir``; return the report (also saved as ``report.json``)."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    state = _RunState(twin=twin, script=script, outdir=out)
    steps_report: list[dict] = []
    snapshots: list[str] = []
    failed_at = None
    error = None
    started = time.time()

    for idx, (kind, body) in enumerate(script.steps):
        try:
            detail = _STEP_RUNNERS[kind](state, body)
            steps_report.append({"step": idx, "kind": kind, "ok": True,
                                 **detail})
        except Exception as exc:
            error = str(exc)
            failed_at = idx
            steps_report.append({"step": idx, "kind": kind, "ok": False,
                                 "error": error})
            logger.warning("experiment %s failed at step %d (%s): %s",
                           script.name, idx, kind, exc)
            break
        snapshots.append(_snapshot_line(twin, idx))

    _write_text(state, "snapshots.jsonl", "".join(snapshots))
    _write_text(state, "commands.json", json.dumps(
        [rec.to_json() for rec in twin.scada.commands], indent=2,
        sort_keys=True) + "\n")
    try:
        twin.scada.push_historian()          # flush anything still buffered
        twin.store.export_csv(str(out / "historian.csv"))
        state.artifacts.append("historian.csv")
    except Exception:
        logger.exception("historian export failed")

    report = {
        "name": script.name,
        "description": script.description,
        "ok": failed_at is None,
        "failed_at": failed_at,
        "error": error,
        "seed": twin.cfg.seed,
        "mode": twin.cfg.mode,
        "started_ts": started,
        "finished_ts": time.time(),
        "steps": steps_report,
        "artifacts": sorted(state.artifacts),
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


def _write_text(state: _RunState, rel: str, text: str) -> None:
    with open(state.outdir / rel, "w", encoding="utf-8") as fh:
        fh.write(text)
    state.artifacts.append(rel)


def _snapshot_line(twin, idx: int) -> str:
    snap = twin.sim.snapshot()
    doc = {
        "step": idx,
        "now_ms": twin.engine.now_ms(),
        "buses": [[b.bus_id, b.voltage_ll, b.current_a, b.p_kw, b.q_kvar,
                   b.frequency_hz] for b in snap.buses],
        "breakers": {b.breaker_id: b.closed for b in snap.breakers},
    }
    return json.dumps(doc, sort_keys=True) + "\n"


# ---- step runners -----------------------------------------------------

def _run_wait(state, body):
    state.twin.wait(body["ms"])
    return {"waited_ms": body["ms"]}


def _run_write(state, body):
    rec = state.twin.scada.write_tag(body["operator"], body["tag"],
                                     body["value"])
    return {"tag": body["tag"], "cmd_id": rec.cmd_id}


def _run_scenario(state, body):
    if "builtin" in body:
        name = body["builtin"]
        script = BUILTIN_SCENARIOS[name]()
    else:
        path = Path(state.script.base_dir) / body["file"]
        script = load_scenario_file(str(path))
        name = script.name
    run = state.get_sploit().run_scenario(script)
    rel = f"sploit/{name}.report.json"
    (state.outdir / "sploit").mkdir(exist_ok=True)
    with open(state.outdir / rel, "w", encoding="utf-8") as fh:
        json.dump(run.report(), fh, indent=2)
        fh.write("\n")
    state.artifacts.append(rel)
    if not run.ok:
        raise ExperimentError(f"scenario {name!r} failed: {run.error}")
    return {"scenario": name, "events": len(run.events), "report": rel}


def _run_attack(state, body):
    spec = AttackSpec.from_dict(body)
    handle = state.get_sploit().launch(spec)
    return {"attack": spec.attack_id, "rules": len(handle.rules)}


def _run_stop_attacks(state, body):
    removed = state.sploit.stop_all() if state.sploit is not None else 0
    return {"removed": removed}


def _run_capture(state, body):
    records = state.twin.fabric.capture(body["switch"])
    path = state.outdir / body["file"]
    path.parent.mkdir(parents=True, exist_ok=True)
    count = write_pcap(str(path), records)
    state.artifacts.append(body["file"])
    return {"switch": body["switch"], "file": body["file"], "packets": count}


def _run_check(state, body):
    for clause in body["that"]:
        _eval_clause(state.twin, clause)
    return {"clauses": len(body["that"])}


_STEP_RUNNERS = {
    "wait": _run_wait,
    "write": _run_write,
    "scenario": _run_scenario,
    "attack": _run_attack,
    "stop_attacks": _run_stop_attacks,
    "capture": _run_capture,
    "check": _run_check,
}


# ---- check clauses ----------------------------------------------------

def _fail(clause, got) -> None:
    raise ExperimentError(f"check failed: {clause!r} (got {got!r})")


def _compare(clause, value) -> None:
    if "equals" in clause and value != clause["equals"]:
        _fail(clause, value)
    if "min" in clause and not value >= clause["min"]:
        _fail(clause, value)
    if "max" in clause and not value <= clause["max"]:
        _fail(clause, value)


def _eval_clause(twin, clause: dict) -> None:
    if "tag" in clause:
        tag = twin.scada.tags.get(clause["tag"])
        _compare(clause, tag.value)
        if "quality" in clause and tag.quality != clause["quality"]:
            _fail(clause, tag.quality)
    elif "truth_bus" in clause:
        rec = twin.sim.read_node(clause["truth_bus"])
        _compare(clause, getattr(rec, clause["field"]))
    elif "truth_breaker" in clause:
        closed = {b.breaker_id: b.closed
                  for b in twin.sim.snapshot().breakers}
        target = clause["truth_breaker"]
        if target not in closed:
            raise ExperimentError(f"check failed: unknown breaker {target!r}")
        if closed[target] is not clause["closed"]:
            _fail(clause, closed[target])
    elif "all_quality" in clause:
        want = clause["all_quality"]
        bad = {path: t.quality
               for path, t in twin.scada.tags.snapshot().items()
               if t.quality != want}
        if bad:
            sample = dict(sorted(bad.items())[:3])
            _fail(clause, f"{len(bad)} tag(s) off, e.g. {sample}")
    elif "command" in clause:
        if not twin.scada.commands:
            _fail(clause, "no commands issued")
        rec = twin.scada.commands[-1]
        if "outcome" in clause and rec.outcome != clause["outcome"]:
            _fail(clause, rec.outcome)
        if "observed" in clause and rec.observed != clause["observed"]:
            _fail(clause, rec.observed)
    else:
        raise AssertionError(clause)
