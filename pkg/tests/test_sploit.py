"""Attack tooling: target enumeration, launches, scenarios, and cleanup."""

import json
from collections import Counter
from types import SimpleNamespace

import pytest
import yaml

from gridtwin.databus.broker import Broker
from gridtwin.device import build_devices, default_roster, mmswire
from gridtwin.procsim import ProcessSimulator, default_topology
from gridtwin.runtime import Engine
from gridtwin.scada import ScadaEngine
from gridtwin.sploit import (
    AttackSpec,
    LauncherClient,
    ScenarioScript,
    ScenarioStep,
    Sploit,
    SploitError,
    SploitRuntimeError,
    TargetMap,
    build_pump_stays_on,
    load_scenario_file,
    plan_rules,
    record_disconnected_profile,
)
from gridtwin.sploit import cli as sploit_cli
from gridtwin.sploit.scenario import PUMP_MEASUREMENTS
from gridtwin.vnet import Fabric, LauncherServer


# ----------------------------------------------------------------------
# Fixtures
# ----------------------------------------------------------------------


@pytest.fixture
def twin():
    """Full accelerated twin with a live launcher endpoint."""
    eng = Engine(mode="fast")
    broker = Broker(engine=eng)
    fabric = Fabric(engine=eng)
    cfgs = default_roster()
    devices = build_devices(cfgs, fabric, broker, eng)
    sim = ProcessSimulator(default_topology(), broker=broker, engine=eng)
    sim.start()
    scada = ScadaEngine(cfgs, fabric, eng)
    scada.start()
    server = LauncherServer(fabric, port=0)
    port = server.start()
    tw = SimpleNamespace(eng=eng, broker=broker, fabric=fabric, sim=sim,
                         scada=scada, devices=devices, launcher_port=port)
    yield tw
    server.stop()
    sim.stop()


def make_sploit(tw, **kwargs) -> Sploit:
    kwargs.setdefault("waiter", lambda ms: tw.eng.run_for(ms))
    return Sploit(("127.0.0.1", tw.launcher_port), **kwargs)


def spoof_q4_1_status(attack_id="hide-q4-1", **over) -> AttackSpec:
    fields = dict(attack_id=attack_id, mode="spoof_status",
                  targets=("SIED1/XCBR_Q4_1.stVal",), payload={"value": False})
    fields.update(over)
    return AttackSpec(**fields)


# ----------------------------------------------------------------------
# Target map
# ----------------------------------------------------------------------


class TestTargetMap:
    def test_every_roster_point_is_listed(self):
        points = {p.path: p for p in TargetMap().list()}
        assert len(points) == 85
        assert {p.kind for p in points.values()} == {
            "measurement", "status", "control"}

    def test_breaker_status_and_control_pair_present(self):
        points = {p.path: p for p in TargetMap().list()}
        status = points["SIED1/XCBR_Q4_1.stVal"]
        control = points["SPLC/CSWI_Q4_1.Oper"]
        assert status.kind == "status" and status.device == "SIED1"
        assert control.kind == "control" and control.target == "Q4_1"

    def test_candidates_follow_the_traffic_path(self):
        points = {p.path: p for p in TargetMap().list()}
        # smart-home IED: its switch, then the control-room switch
        sied = points["SIED1/MMXU1.PhV"]
        assert sied.switch == "SSW"
        assert sied.candidate_switches == ("SSW", "CSW")
        assert sied.consumers == ("SCADA", "SPLC")
        # generation IED: three hops along the active tree
        gied = points["GIED1/MMXU1.PhV"]
        assert gied.candidate_switches == ("GSW", "TSW", "CSW")
        # meters have no PLC poller
        ami = points["AMI1/MMXU1.PhV"]
        assert ami.candidate_switches == ("AMISW", "CSW")
        assert ami.consumers == ("SCADA",)

    def test_empty_roster_lists_nothing(self):
        assert TargetMap(roster=[]).list() == []

    def test_unknown_path_raises(self):
        with pytest.raises(SploitError, match="not in the device roster"):
            TargetMap().get("NOPE/MMXU1.PhV")


# ----------------------------------------------------------------------
# Spec validation and planning (no launcher needed)
# ----------------------------------------------------------------------


class TestSpecValidation:
    def setup_method(self):
        self.tmap = TargetMap()

    def plan(self, spec):
        return plan_rules(spec, self.tmap)

    def test_unknown_target_rejected(self):
        spec = spoof_q4_1_status(targets=("SIED9/XCBR.stVal",))
        with pytest.raises(SploitError, match="not in the device roster"):
            self.plan(spec)

    def test_mode_and_point_kind_must_agree(self):
        with pytest.raises(SploitError, match="needs a status point"):
            self.plan(spoof_q4_1_status(targets=("SIED1/MMXU1.PhV",)))
        with pytest.raises(SploitError, match="needs a measurement point"):
            self.plan(AttackSpec(attack_id="x", mode="spoof_measurement",
                                 targets=("SIED1/XCBR_Q4_1.stVal",),
                                 payload={"value": 0.0}))
        with pytest.raises(SploitError, match="needs a control point"):
            self.plan(AttackSpec(attack_id="x", mode="intercept_command",
                                 targets=("SIED1/MMXU1.PhV",),
                                 payload={"execute": True}))

    def test_placement_must_lie_on_the_traffic_path(self):
        with pytest.raises(SploitError, match="not on the path"):
            self.plan(spoof_q4_1_status(placement=("GSW",)))

    def test_placement_override_anywhere_on_path(self):
        plan = self.plan(spoof_q4_1_status(placement=("CSW",)))
        assert [pr.switch for pr in plan] == ["CSW"]

    def test_default_placement_is_nearest_the_producer(self):
        plan = self.plan(spoof_q4_1_status())
        assert [pr.switch for pr in plan] == ["SSW"]

    def test_payload_shapes(self):
        with pytest.raises(SploitError, match="needs 'value'"):
            self.plan(spoof_q4_1_status(payload={}))
        with pytest.raises(SploitError, match="exactly one"):
            self.plan(AttackSpec(attack_id="x", mode="spoof_measurement",
                                 targets=("SIED1/MMXU1.PhV",),
                                 payload={"value": 1.0, "profiles": {}}))
        with pytest.raises(SploitError, match="needs.*'execute'"):
            self.plan(AttackSpec(attack_id="x", mode="intercept_command",
                                 targets=("SPLC/CSWI_Q4_1.Oper",), payload={}))
        with pytest.raises(SploitError, match="expected boolean"):
            self.plan(spoof_q4_1_status(payload={"value": 3.0}))
        with pytest.raises(SploitError, match="expected float64"):
            self.plan(AttackSpec(attack_id="x", mode="spoof_measurement",
                                 targets=("SIED1/MMXU1.PhV",),
                                 payload={"value": True}))

    def test_composite_shape_rules(self):
        with pytest.raises(SploitError, match="at least one part"):
            AttackSpec(attack_id="c", mode="composite")
        with pytest.raises(SploitError, match="concrete attacks"):
            AttackSpec(attack_id="c", mode="composite",
                       parts=(AttackSpec(attack_id="inner", mode="composite",
                                         parts=(spoof_q4_1_status(),)),))
        with pytest.raises(SploitError, match="no parts"):
            spoof_q4_1_status(parts=(spoof_q4_1_status("p"),))

    def test_intercept_plans_execute_and_echo_rules(self):
        plan = self.plan(AttackSpec(
            attack_id="flip", mode="intercept_command",
            targets=("SPLC/CSWI_Q4_1.Oper",),
            payload={"execute": True, "echo": False}))
        kinds = [(pr.rule["match"]["msg_type"],
                  pr.rule["action"]["value"]["v"]) for pr in plan]
        assert kinds == [("WriteReq", True), ("WriteResp", False),
                         ("ReadResp", False)]
        # without an echo, only the command itself is touched
        plan = self.plan(AttackSpec(
            attack_id="loud", mode="intercept_command",
            targets=("SPLC/CSWI_Q4_1.Oper",), payload={"execute": True}))
        assert [pr.rule["match"]["msg_type"] for pr in plan] == ["WriteReq"]

    def test_from_dict_roundtrip_and_unknown_fields(self):
        spec = AttackSpec.from_dict({
            "attack_id": "combo", "mode": "composite",
            "parts": [{"mode": "spoof_status",
                       "targets": "SIED1/XCBR_Q4_1.stVal",
                       "payload": {"value": False}}]})
        assert spec.parts[0].attack_id == "combo.1"
        assert spec.parts[0].targets == ("SIED1/XCBR_Q4_1.stVal",)
        assert AttackSpec.from_dict(spec.to_dict()) == spec
        with pytest.raises(SploitError, match="unknown attack spec fields"):
            AttackSpec.from_dict({"attack_id": "x", "mode": "spoof_status",
                                  "surprise": 1})

    def test_duration_must_be_positive(self):
        with pytest.raises(SploitError, match="positive"):
            spoof_q4_1_status(duration_ms=0)


# ----------------------------------------------------------------------
# Launch, hit counts, rollback, stop
# ----------------------------------------------------------------------


class TestLaunch:
    def test_spoofed_status_hides_a_closed_breaker(self, twin):
        sp = make_sploit(twin)
        twin.eng.run_for(1500)
        assert twin.scada.tags.get("SIED1/XCBR_Q4_1.stVal").value is True

        handle = sp.launch(spoof_q4_1_status())
        twin.eng.run_for(2500)

        tag = twin.scada.tags.get("SIED1/XCBR_Q4_1.stVal")
        assert tag.value is False and tag.quality == "good"
        # ground truth: the breaker never moved and the feeder is energized
        breakers = {b.breaker_id: b.closed for b in twin.sim.snapshot().breakers}
        assert breakers["Q4_1"] is True
        assert twin.sim.read_node("LB1_BUS").voltage_ll > 100.0
        # live hit counts through the handle
        status = handle.status()
        assert len(status) == 1 and status[0]["hit_count"] >= 2

    def test_spoofed_measurement_constant(self, twin):
        sp = make_sploit(twin)
        sp.launch(AttackSpec(attack_id="flat", mode="spoof_measurement",
                             targets=("SIED2/MMXU2.A",),
                             payload={"value": 0.0}))
        twin.eng.run_for(2500)
        assert twin.scada.tags.get("SIED2/MMXU2.A").value == 0.0
        assert twin.sim.read_node("MOTOR_BUS").current_a > 0.1

    def test_spoofed_measurement_replays_recorded_profile(self, twin):
        sp = make_sploit(twin)
        sp.launch(AttackSpec(
            attack_id="replay", mode="spoof_measurement",
            targets=("SIED1/MMXU1.PhV",),
            payload={"profiles": {"SIED1/MMXU1.PhV": [7.0, 9.0]},
                     "period_ms": 100.0}))
        twin.eng.run_for(2500)
        assert twin.scada.tags.get("SIED1/MMXU1.PhV").value in (7.0, 9.0)

    def test_invalid_spec_installs_nothing(self, twin):
        sp = make_sploit(twin)
        before = sp.client.rules()
        with pytest.raises(SploitError):
            sp.launch(spoof_q4_1_status(targets=("SIED9/XCBR.stVal",)))
        assert sp.client.rules() == before

    def test_refused_install_rolls_back_completely(self, twin):
        sp = make_sploit(twin)
        probe = LauncherClient("127.0.0.1", twin.launcher_port)
        # occupy the second rule id the launch will ask for
        probe.install("SSW", {"match": {"msg_type": "ReadResp"},
                              "action": {"kind": "pass"}},
                      rule_id="sploit.two.2", client="someone-else")
        before = sp.client.rules()
        spec = AttackSpec(attack_id="two", mode="spoof_status",
                          targets=("SIED1/XCBR_Q4_1.stVal",
                                   "SIED2/XCBR_Q4_2.stVal"),
                          payload={"value": False})
        with pytest.raises(SploitRuntimeError, match="rolled back 1 rule"):
            sp.launch(spec)
        assert sp.client.rules() == before     # table diff empty
        probe.close()

    def test_stop_restores_the_true_view(self, twin):
        sp = make_sploit(twin)
        handle = sp.launch(spoof_q4_1_status())
        twin.eng.run_for(2500)
        assert twin.scada.tags.get("SIED1/XCBR_Q4_1.stVal").value is False
        assert handle.stop() == 1
        assert handle.stop() == 0              # idempotent
        twin.eng.run_for(2000)
        tag = twin.scada.tags.get("SIED1/XCBR_Q4_1.stVal")
        assert tag.value is True and tag.quality == "good"

    def test_duplicate_attack_id_refused_while_active(self, twin):
        sp = make_sploit(twin)
        sp.launch(spoof_q4_1_status())
        with pytest.raises(SploitError, match="already active"):
            sp.launch(spoof_q4_1_status())

    def test_timed_attack_is_reaped_after_its_duration(self, twin, monkeypatch):
        sp = make_sploit(twin)
        t = [100.0]
        monkeypatch.setattr("gridtwin.sploit.attacks.time.monotonic",
                            lambda: t[0])
        sp.launch(spoof_q4_1_status(duration_ms=5000))
        assert len(sp.status()["rules"]) == 1
        t[0] += 5.1
        assert sp.status()["rules"] == []


# ----------------------------------------------------------------------
# Non-interference: other points' frames stay byte-identical
# ----------------------------------------------------------------------


class TestNonInterference:
    def test_untargeted_frames_pass_byte_identical(self, twin):
        sp = make_sploit(twin)
        sp.launch(AttackSpec(attack_id="one-point", mode="spoof_measurement",
                             targets=("SIED1/MMXU1.PhV",),
                             payload={"value": 1.0}))
        twin.eng.run_for(3000)

        def is_target(payload):
            msg = mmswire.try_decode(payload)
            return (msg is not None and msg.path == "SIED1/MMXU1.PhV"
                    and msg.msg_type == mmswire.MSG_READ_RESP)

        records = twin.fabric.capture("SSW")
        others_in = Counter(r.payload for r in records
                            if r.direction == "ingress" and not is_target(r.payload))
        others_out = Counter(r.payload for r in records
                             if r.direction == "egress" and not is_target(r.payload))
        assert others_in and others_in == others_out
        # the targeted responses really were rewritten in flight
        forged = [mmswire.try_decode(r.payload).value for r in records
                  if r.direction == "egress" and is_target(r.payload)]
        assert forged and set(forged) == {1.0}


# ----------------------------------------------------------------------
# Rehearsal recording
# ----------------------------------------------------------------------


class TestRehearsal:
    def test_records_the_disconnected_feeder(self):
        profile = record_disconnected_profile(
            ("SIED1/MMXU1.PhV", "SIED1/MMXU1.A"), ("Q4_1",),
            duration_ms=3000)
        assert set(profile) == {"SIED1/MMXU1.PhV", "SIED1/MMXU1.A"}
        for values in profile.values():
            assert len(values) >= 25
            assert all(v == 0.0 for v in values)   # feeder truly dead

    def test_unknown_path_or_breaker_rejected(self):
        with pytest.raises(SploitError, match="no measurement source"):
            record_disconnected_profile(("SIED1/XCBR_Q4_1.stVal",), ("Q4_1",))
        with pytest.raises(SploitError, match="cannot open"):
            record_disconnected_profile(("SIED1/MMXU1.PhV",), ("Q9_9",))


# ----------------------------------------------------------------------
# Scenarios
# ----------------------------------------------------------------------


class TestScenarioValidation:
    def test_remove_before_install_rejected(self):
        with pytest.raises(SploitError, match="precedes its install"):
            ScenarioScript(name="bad", steps=(
                ScenarioStep(trigger={"kind": "immediate"}, action="remove",
                             attack_id="ghost"),))

    def test_double_install_rejected(self):
        step = ScenarioStep(trigger={"kind": "immediate"}, action="install",
                            attack=spoof_q4_1_status())
        with pytest.raises(SploitError, match="installed twice"):
            ScenarioScript(name="bad", steps=(step, step))

    def test_on_command_cannot_remove(self):
        with pytest.raises(SploitError, match="only install"):
            ScenarioStep(trigger={"kind": "on_command", "tag": "X/y.z"},
                         action="remove", attack_id="a")

    def test_after_needs_nonnegative_ms(self):
        with pytest.raises(SploitError, match="ms >= 0"):
            ScenarioStep(trigger={"kind": "after", "ms": -1},
                         action="install", attack=spoof_q4_1_status())

    def test_on_command_tag_must_be_a_control_point(self, twin):
        sp = make_sploit(twin)
        script = ScenarioScript(name="bad", steps=(
            ScenarioStep(trigger={"kind": "on_command",
                                  "tag": "SIED1/MMXU1.PhV"},
                         action="install", attack=spoof_q4_1_status()),))
        with pytest.raises(SploitError, match="control point"):
            sp.run_scenario(script)

    def test_scenario_file_loading(self, tmp_path):
        doc = {
            "name": "from-file",
            "description": "one install",
            "steps": [{
                "trigger": {"kind": "immediate"},
                "action": "install",
                "attack": {"attack_id": "a", "mode": "spoof_status",
                           "targets": ["SIED1/XCBR_Q4_1.stVal"],
                           "payload": {"value": False}},
            }],
        }
        path = tmp_path / "scenario.yaml"
        path.write_text(yaml.safe_dump(doc), encoding="utf-8")
        script = load_scenario_file(str(path))
        assert script.name == "from-file" and len(script.steps) == 1

        bad = tmp_path / "bad.yaml"
        bad.write_text("{nope", encoding="utf-8")
        with pytest.raises(SploitError, match="cannot parse"):
            load_scenario_file(str(bad))


class TestScenarioRuns:
    def test_install_then_after_zero_remove_is_net_noop(self, twin):
        sp = make_sploit(twin)
        baseline = sp.client.rules()
        script = ScenarioScript(name="blink", steps=(
            ScenarioStep(trigger={"kind": "immediate"}, action="install",
                         attack=spoof_q4_1_status("blink")),
            ScenarioStep(trigger={"kind": "after", "ms": 0}, action="remove",
                         attack_id="blink"),
        ))
        run = sp.run_scenario(script)
        assert run.ok
        assert [e["action"] for e in run.events] == ["install", "remove"]
        assert run.events[1]["removed"] == 1
        assert sp.client.rules() == baseline

    def test_failing_step_rolls_back_the_whole_scenario(self, twin):
        sp = make_sploit(twin)
        probe = LauncherClient("127.0.0.1", twin.launcher_port)
        probe.install("SSW", {"match": {}, "action": {"kind": "pass"}},
                      rule_id="sploit.second.1", client="someone-else")
        baseline = sp.client.rules()
        script = ScenarioScript(name="doomed", steps=(
            ScenarioStep(trigger={"kind": "immediate"}, action="install",
                         attack=spoof_q4_1_status("first")),
            ScenarioStep(trigger={"kind": "immediate"}, action="install",
                         attack=spoof_q4_1_status(
                             "second", targets=("SIED2/XCBR_Q4_2.stVal",))),
        ))
        run = sp.run_scenario(script)
        assert not run.ok and run.error.startswith("step 1")
        assert run.events[-1]["action"] == "abort"
        assert sp.client.rules() == baseline   # step-0 rules removed too
        probe.close()

    def test_stop_all_clears_rules_and_armed_watches(self, twin):
        sp = make_sploit(twin)
        run = sp.run_scenario(build_pump_stays_on(rehearse_ms=2000))
        assert run.ok
        state = sp.status()
        assert len(state["rules"]) == 3 and len(state["watches"]) == 1
        removed = sp.stop_all()
        assert removed == 4
        state = sp.status()
        assert state["rules"] == [] and state["watches"] == []
        # selectivity restored: the fabric forwards byte-identically again
        twin.eng.run_for(1500)
        records = [r for r in twin.fabric.capture("SSW")
                   if r.ts_ms > twin.eng.now_ms() - 1400]
        ingress = Counter(r.payload for r in records if r.direction == "ingress")
        egress = Counter(r.payload for r in records if r.direction == "egress")
        assert ingress == egress

    def test_stop_all_counts_every_launched_rule(self, twin):
        sp = make_sploit(twin)
        sp.launch(spoof_q4_1_status("a"))
        sp.launch(AttackSpec(attack_id="b", mode="spoof_measurement",
                             targets=("SIED1/MMXU1.A", "SIED1/MMXU1.TotW"),
                             payload={"value": 0.0}))
        sp.launch(AttackSpec(attack_id="c", mode="intercept_command",
                             targets=("SPLC/CSWI_Q4_1.Oper",),
                             payload={"execute": True, "echo": False}))
        assert sp.stop_all() == 1 + 2 + 3
        assert sp.stop_all() == 0              # idle system


class TestPumpStaysOn:
    """The end-to-end hidden-load case study."""

    def test_operator_off_command_is_neutralized_and_hidden(self, twin):
        sp = make_sploit(twin)
        twin.eng.run_for(2500)   # healthy baseline first
        assert twin.scada.tags.get("SIED1/XCBR_Q4_1.stVal").value is True

        script = build_pump_stays_on()
        profile = script.steps[1].attack.parts[1].payload["profiles"]
        run = sp.run_scenario(script)
        assert run.ok
        watches = sp.client.watches()
        assert len(watches) == 1 and watches[0]["fired"] is False

        # the victim turns the pump off
        record = twin.scada.write_tag("operator", "SPLC/CSWI_Q4_1.Oper", False)
        twin.eng.run_for(4000)

        # the operator's view: command worked, feeder is dead, nothing stale
        assert record.outcome == "acked"
        assert record.observed is False and record.observed_quality == "good"
        snap = twin.scada.tags.snapshot()
        assert snap["SIED1/XCBR_Q4_1.stVal"].value is False
        assert snap["SPLC/CSWI_Q4_1.Oper"].value is False
        for path in PUMP_MEASUREMENTS:
            # every value shown is one the dead feeder genuinely published
            assert snap[path].value in set(profile[path]), path
        for path in ("SIED1/MMXU1.PhV", "SIED1/MMXU1.A", "SIED1/MMXU1.TotW"):
            assert snap[path].value == 0.0
        # a dead feeder still shows the system frequency, not an absurd 0 Hz
        assert 45.0 < snap["SIED1/MMXU1.Hz"].value < 55.0
        assert {t.quality for t in snap.values()} == {"good"}

        # ground truth: the breaker is still closed and the load still draws
        breakers = {b.breaker_id: b.closed for b in twin.sim.snapshot().breakers}
        assert breakers["Q4_1"] is True
        truth = twin.sim.read_node("LB1_BUS")
        assert truth.voltage_ll > 100.0 and truth.current_a > 0.1

        # the report shows both installs, the fired watch, and live hits
        report = run.report()
        assert [e["action"] for e in report["events"]] == ["install", "install"]
        assert all("ts" in e for e in report["events"])
        assert report["live_watches"][0]["fired"] is True
        hits = {r["rule_id"]: r["hit_count"] for r in report["live_rules"]}
        assert hits["sploit.pump-keep-on.1"] >= 1          # flipped WriteReq
        assert hits["sploit.pump-hide-off.status.1"] >= 1  # forged status

    def test_scenario_leaves_other_zones_untouched(self, twin):
        sp = make_sploit(twin)
        run = sp.run_scenario(build_pump_stays_on(rehearse_ms=2000))
        assert run.ok
        twin.scada.write_tag("operator", "SPLC/CSWI_Q4_1.Oper", False)
        twin.eng.run_for(4000)
        snap = twin.scada.tags.snapshot()
        # a neighbouring feeder in the same zone still reports truthfully
        assert snap["SIED2/XCBR_Q4_2.stVal"].value is True
        assert snap["SIED2/MMXU1.PhV"].value > 100.0
        # and so does another zone entirely
        assert snap["GIED1/MMXU1.PhV"].value > 100.0


# ----------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------


class TestCli:
    def run_cli(self, twin, *argv):
        return sploit_cli.main(
            ["--launcher", f"127.0.0.1:{twin.launcher_port}", *argv])

    def test_targets_table_and_json(self, twin, capsys):
        assert self.run_cli(twin, "targets") == 0
        out = capsys.readouterr().out
        assert "85 attackable point(s)" in out
        assert self.run_cli(twin, "targets", "--json") == 0
        points = json.loads(capsys.readouterr().out)
        assert len(points) == 85

    def test_launch_status_stop_all_roundtrip(self, twin, capsys, tmp_path):
        spec = tmp_path / "attack.yaml"
        spec.write_text(yaml.safe_dump(spoof_q4_1_status().to_dict()),
                        encoding="utf-8")
        assert self.run_cli(twin, "launch", str(spec)) == 0
        assert "launched hide-q4-1: 1 rule(s)" in capsys.readouterr().out
        assert self.run_cli(twin, "status") == 0
        assert "sploit.hide-q4-1.1" in capsys.readouterr().out
        assert self.run_cli(twin, "stop-all") == 0
        assert "removed 1" in capsys.readouterr().out

    def test_scenario_run_writes_report(self, twin, capsys, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        report = tmp_path / "run.json"
        assert self.run_cli(twin, "scenario", "run", "pump_stays_on",
                            "--report", str(report)) == 0
        doc = json.loads(report.read_text(encoding="utf-8"))
        assert doc["scenario"] == "pump_stays_on" and doc["ok"]
        assert len(doc["events"]) == 2
        capsys.readouterr()

    def test_validation_failures_exit_1(self, twin, capsys, tmp_path):
        spec = tmp_path / "bad.yaml"
        spec.write_text(yaml.safe_dump({"attack_id": "x", "mode": "nope"}),
                        encoding="utf-8")
        assert self.run_cli(twin, "launch", str(spec)) == 1
        assert "error:" in capsys.readouterr().err
        assert self.run_cli(twin, "launch", str(tmp_path / "missing.yaml")) == 1
        capsys.readouterr()

    def test_launcher_down_exits_2(self, capsys):
        assert sploit_cli.main(["--launcher", "127.0.0.1:1", "status"]) == 2
        assert "runtime failure:" in capsys.readouterr().err
