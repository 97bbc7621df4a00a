"""Grid model, nodal solver, and tick-loop behaviour.

Solver results are checked against hand-computed Gauss-Seidel solutions of
tiny networks (values frozen below) and against conservation/scaling
invariants on the default topology.
"""

from __future__ import annotations

import json
import math
import random
import socket

import pytest

from gridtwin.databus import Broker, LocalBusClient
from gridtwin.procsim import (
    ActuatorCommand,
    ProcessSimulator,
    TopologyError,
    default_topology,
    default_topology_doc,
    load_topology,
    solve_network,
)
from gridtwin.runtime import Engine


SQRT3 = math.sqrt(3.0)

# Hand Gauss-Seidel solutions, z = 0.01+0.05j pu per branch, S_base 100 kVA,
# 400 V LL, load = 45 kVA at pf 0.9 (P 40.5 kW / Q 19.615... kvar):
TWO_BUS_V_LOAD = 0.9856006675348373 - 0.018288495475406702j
TWO_BUS_V_LL = 394.3081322847645
TWO_BUS_I_AMP = 65.88949094960631
TWO_BUS_BRANCH_I_PU = 0.4564957840382702
TWO_BUS_P_LOSS_PU = 0.0020838840084471504
TWO_BUS_P_SOURCE_PU = 0.4070838840084468
THREE_BUS_V_LOAD = 0.9700500808286919 - 0.03657699095080914j
THREE_BUS_V_HUB = 0.9850250404143501 - 0.01828849547540264j
THREE_BUS_I_AMP = 66.90972207550803
LB_Q_KVAR = 45.0 * math.sqrt(1.0 - 0.81)  # 19.61504524593303


def tiny_doc(n_hops: int) -> dict:
    """SRC -- hub chain -- LOAD with ``n_hops`` identical branches."""
    buses = [{"id": "SRC", "zone": "Generation", "nominal_voltage": 400.0}]
    branches = []
    prev = "SRC"
    for i in range(n_hops):
        nxt = "LOAD" if i == n_hops - 1 else f"H{i}"
        buses.append({"id": nxt, "zone": "SmartHome", "nominal_voltage": 400.0})
        branches.append({"id": f"BR{i}", "from_bus": prev, "to_bus": nxt})
        prev = nxt
    return {
        "schema_version": 1,
        "system": {"s_base_kva": 100.0, "v_nominal_ll": 400.0, "f_nominal_hz": 50.0},
        "buses": buses,
        "branches": branches,
        "breakers": [{"id": "QL", "branch_id": branches[-1]["id"], "initial_closed": True}],
        "sources": [{"id": "G", "bus": "SRC", "kind": "Generator", "rating_kva": 100.0}],
        "loads": [{"id": "LB", "bus": "LOAD", "kind": "LoadBank", "rating_kva": 45.0,
                   "power_factor": 0.9, "setpoint_percent": 100}],
    }


# ----------------------------------------------------------------------
# Topology loading and validation
# ----------------------------------------------------------------------


def test_default_topology_equipment_ratings():
    topo = default_topology()
    gens = [s for s in topo.sources if s.kind == "Generator"]
    assert len(gens) == 2
    assert all(g.rating_kva == 10.0 for g in gens)
    by_id = {s.id: s for s in topo.sources}
    assert by_id["PV1"].rating_kva == 34.0
    assert by_id["BAT1"].rating_kva == 18.0
    assert by_id["GRID1"].rating_kva == 105.0
    banks = [l for l in topo.loads if l.kind == "LoadBank"]
    assert len(banks) == 2
    assert all(b.rating_kva == 45.0 for b in banks)
    motor = [l for l in topo.loads if l.kind == "MotorGenerator"]
    assert len(motor) == 1 and motor[0].rating_kva == 10.0
    assert {b.zone for b in topo.buses} == {"Generation", "MicroGrid", "Transmission", "SmartHome"}


def test_setpoint_not_step_10_rejected():
    doc = default_topology_doc()
    doc["loads"][0]["setpoint_percent"] = 55
    with pytest.raises(TopologyError, match="setpoint_percent"):
        load_topology(doc)


def test_empty_bus_list_rejected():
    doc = default_topology_doc()
    doc["buses"] = []
    with pytest.raises(TopologyError, match="no buses"):
        load_topology(doc)


def test_dangling_reference_names_the_id():
    doc = default_topology_doc()
    doc["branches"][0]["to_bus"] = "NOWHERE"
    with pytest.raises(TopologyError, match="NOWHERE"):
        load_topology(doc)


def test_disconnected_graph_rejected():
    doc = default_topology_doc()
    doc["branches"] = [b for b in doc["branches"] if b["id"] != "B_TS"]
    doc["breakers"] = [b for b in doc["breakers"] if b["id"] != "Q3_2"]
    with pytest.raises(TopologyError, match="not connected"):
        load_topology(doc)


def test_bad_zone_rejected():
    doc = default_topology_doc()
    doc["buses"][0]["zone"] = "Distribution"
    with pytest.raises(TopologyError, match="zone"):
        load_topology(doc)


def test_schema_version_checked():
    doc = default_topology_doc()
    doc["schema_version"] = 99
    with pytest.raises(TopologyError, match="schema_version"):
        load_topology(doc)


def test_breaker_zone_follows_from_bus():
    topo = default_topology()
    assert topo.breaker_zone("Q4_1") == "SmartHome"
    assert topo.breaker_zone("Q1_3") == "Generation"
    assert topo.breaker_zone("Q3_2") == "Transmission"


# ----------------------------------------------------------------------
# Solver vs hand-computed solutions
# ----------------------------------------------------------------------


def test_two_bus_matches_hand_solution():
    topo = load_topology(tiny_doc(1))
    res = solve_network(topo, {"QL": True}, {"LB": 100})
    assert res.converged
    i_load = topo.bus_index["LOAD"]
    assert res.v_pu[i_load] == pytest.approx(TWO_BUS_V_LOAD, abs=1e-9)
    assert abs(res.v_pu[i_load]) * 400.0 == pytest.approx(TWO_BUS_V_LL, abs=1e-6)
    assert abs(res.branch_current_pu["BR0"]) == pytest.approx(TWO_BUS_BRANCH_I_PU, abs=1e-9)
    assert res.p_loss_pu == pytest.approx(TWO_BUS_P_LOSS_PU, abs=1e-12)
    # source bus drawn power is negative injection
    i_src = topo.bus_index["SRC"]
    assert -res.s_drawn_pu[i_src].real == pytest.approx(TWO_BUS_P_SOURCE_PU, abs=1e-9)
    # load bus draws exactly the demanded constant-PQ power
    assert res.s_drawn_pu[i_load].real * 100.0 == pytest.approx(40.5, abs=1e-6)
    assert res.s_drawn_pu[i_load].imag * 100.0 == pytest.approx(LB_Q_KVAR, abs=1e-6)


def test_three_bus_matches_hand_solution():
    topo = load_topology(tiny_doc(2))
    res = solve_network(topo, {"QL": True}, {"LB": 100})
    assert res.converged
    assert res.v_pu[topo.bus_index["LOAD"]] == pytest.approx(THREE_BUS_V_LOAD, abs=1e-9)
    assert res.v_pu[topo.bus_index["H0"]] == pytest.approx(THREE_BUS_V_HUB, abs=1e-9)


def test_power_balance_default_topology():
    topo = default_topology()
    closed = {bk.id: True for bk in topo.breakers}
    setp = {ld.id: ld.setpoint_percent for ld in topo.loads}
    res = solve_network(topo, closed, setp)
    assert res.converged
    # sum of drawn power over all buses equals minus the losses
    assert sum(res.s_drawn_pu).real == pytest.approx(-res.p_loss_pu, abs=1e-6)
    assert sum(res.s_drawn_pu).imag == pytest.approx(-res.q_loss_pu, abs=1e-6)


def test_power_balance_random_states():
    topo = default_topology()
    rnd = random.Random(42)
    for _ in range(25):
        closed = {bk.id: rnd.random() < 0.8 for bk in topo.breakers}
        setp = {
            ld.id: (ld.setpoint_percent if ld.fixed else rnd.randrange(0, 101, 10))
            for ld in topo.loads
        }
        res = solve_network(topo, closed, setp)
        if not res.converged:
            continue
        assert sum(res.s_drawn_pu).real == pytest.approx(-res.p_loss_pu, abs=1e-6)
        assert sum(res.s_drawn_pu).imag == pytest.approx(-res.q_loss_pu, abs=1e-6)
        # dead islands are exact zeros
        for i in range(len(topo.buses)):
            if not res.energized[i]:
                assert res.v_pu[i] == 0 and res.s_drawn_pu[i] == 0


def test_all_breakers_open_zeroes_every_load_bus():
    topo = default_topology()
    closed = {bk.id: False for bk in topo.breakers}
    setp = {ld.id: ld.setpoint_percent for ld in topo.loads}
    res = solve_network(topo, closed, setp)
    for ld in topo.loads:
        i = topo.bus_index[ld.bus]
        assert res.v_pu[i] == 0
        assert res.s_drawn_pu[i] == 0
    # an unloaded machine still shows nominal voltage at its own terminal
    assert abs(res.v_pu[topo.bus_index["GEN1_BUS"]]) == 1.0


def test_load_scaling_is_linear():
    topo = load_topology(tiny_doc(1))
    p100 = solve_network(topo, {"QL": True}, {"LB": 100})
    i_load = topo.bus_index["LOAD"]
    base = p100.s_drawn_pu[i_load].real
    for k in range(0, 11):
        res = solve_network(topo, {"QL": True}, {"LB": k * 10})
        got = res.s_drawn_pu[i_load].real
        if k == 0:
            assert got == pytest.approx(0.0, abs=1e-12)
        else:
            assert got / base == pytest.approx(k / 10.0, rel=1e-9)


# ----------------------------------------------------------------------
# Simulator: commands, snapshots, publishing
# ----------------------------------------------------------------------


def make_sim(**kwargs) -> ProcessSimulator:
    return ProcessSimulator(default_topology(), **kwargs)


def test_load_bank_full_and_half_setpoint():
    sim = make_sim()
    sim.apply_command(ActuatorCommand("LB1", "set_percent", 100, origin="t", seq=1))
    snap = sim.step()
    rec = snap.buses[sim.topology.bus_index["LB1_BUS"]]
    assert rec.p_kw == pytest.approx(40.5, abs=1e-6)
    assert rec.q_kvar == pytest.approx(LB_Q_KVAR, abs=1e-6)
    sim.apply_command(ActuatorCommand("LB1", "set_percent", 50, origin="t", seq=2))
    snap = sim.step()
    rec = snap.buses[sim.topology.bus_index["LB1_BUS"]]
    assert math.hypot(rec.p_kw, rec.q_kvar) == pytest.approx(22.5, abs=1e-6)


def test_setpoint_scaling_through_commands():
    sim = make_sim()
    sim.apply_command(ActuatorCommand("LB1", "set_percent", 100, origin="t", seq=1))
    p100 = sim.step().buses[sim.topology.bus_index["LB1_BUS"]].p_kw
    sim.apply_command(ActuatorCommand("LB1", "set_percent", 70, origin="t", seq=2))
    p70 = sim.step().buses[sim.topology.bus_index["LB1_BUS"]].p_kw
    assert p70 / p100 == pytest.approx(0.7, rel=1e-9)


def test_breaker_open_zeroes_downstream_next_snapshot():
    sim = make_sim()
    first = sim.step()
    i_lb1 = sim.topology.bus_index["LB1_BUS"]
    assert first.buses[i_lb1].p_kw > 0
    ack = sim.apply_command(ActuatorCommand("Q4_1", "open", origin="op", seq=1))
    assert ack.ok and ack.state == "0"
    snap = sim.step()
    rec = snap.buses[i_lb1]
    assert rec.voltage_ll == 0.0 and rec.current_a == 0.0
    assert rec.p_kw == 0.0 and rec.q_kvar == 0.0
    states = {b.breaker_id: b.closed for b in snap.breakers}
    assert states["Q4_1"] is False


def test_stale_seq_rejected():
    sim = make_sim()
    ok = sim.apply_command(ActuatorCommand("Q4_1", "open", origin="op", seq=5))
    assert ok.ok
    replay = sim.apply_command(ActuatorCommand("Q4_1", "open", origin="op", seq=5))
    assert not replay.ok and "stale" in replay.reason
    other = sim.apply_command(ActuatorCommand("Q4_1", "close", origin="other", seq=1))
    assert other.ok  # replay guard is per origin


def test_invalid_commands_rejected():
    sim = make_sim()
    assert not sim.apply_command(ActuatorCommand("NOPE", "open", origin="t", seq=1)).ok
    assert not sim.apply_command(ActuatorCommand("LB1", "set_percent", 55, origin="t", seq=2)).ok
    assert not sim.apply_command(ActuatorCommand("WATER1", "set_percent", 50, origin="t", seq=3)).ok
    assert not sim.apply_command(ActuatorCommand("Q4_1", "set_percent", 50, origin="t", seq=4)).ok
    assert not sim.apply_command(ActuatorCommand("LB1", "open", origin="t", seq=5)).ok
    # none of the rejected commands changed anything
    snap = sim.step()
    assert {b.breaker_id: b.closed for b in snap.breakers}["Q4_1"] is True
    assert sim.load_setpoints["LB1"] == 60


def test_frequency_follows_droop_recursion():
    sim = make_sim()
    # expected: f' = f + alpha (f_target - f) per 100 ms tick
    topo = sim.topology
    p_load = sum(l.demand_kva(l.setpoint_percent).real for l in topo.loads)
    p_pq = sum(s.p_kw for s in topo.sources if not s.is_voltage_source)
    f_target = 50.0 - 0.5 * (p_load - p_pq) / topo.s_base_kva
    alpha = 1.0 - math.exp(-0.1 / 2.0)
    expected = 50.0
    for _ in range(100):
        expected += alpha * (f_target - expected)
        snap = sim.step()
    freqs = {r.frequency_hz for r in snap.buses}
    assert len(freqs) == 1  # single synchronous area
    assert snap.buses[0].frequency_hz == pytest.approx(expected, abs=1e-9)
    assert abs(snap.buses[0].frequency_hz - f_target) < 0.01  # ~5 time constants in


def test_read_node():
    sim = make_sim()
    sim.step()
    rec = sim.read_node("GBUS")
    assert rec.bus_id == "GBUS"
    assert rec.voltage_ll == pytest.approx(400.0, rel=0.05)
    with pytest.raises(ValueError, match="unknown bus"):
        sim.read_node("NOPE")


def test_current_consistent_with_power_and_voltage():
    sim = make_sim()
    snap = sim.step()
    for rec in snap.buses:
        if rec.voltage_ll == 0.0:
            assert rec.current_a == 0.0
            continue
        s_va = math.hypot(rec.p_kw, rec.q_kvar) * 1e3
        assert rec.current_a == pytest.approx(s_va / (SQRT3 * rec.voltage_ll), rel=1e-12)


def test_degraded_tick_holds_previous_values():
    doc = tiny_doc(1)
    doc["loads"][0].update(rating_kva=100000.0, setpoint_percent=0)
    topo = load_topology(doc)
    sim = ProcessSimulator(topo)
    good = sim.step()
    assert not good.degraded
    sim.apply_command(ActuatorCommand("LB", "set_percent", 100, origin="t", seq=1))
    bad = sim.step()
    assert bad.degraded
    i_load = topo.bus_index["LOAD"]
    assert bad.buses[i_load].voltage_ll == good.buses[i_load].voltage_ll
    # the loop keeps going
    assert sim.step().degraded


def test_publishes_sensor_and_status_topics():
    engine = Engine(mode="fast")
    broker = Broker(engine=engine)
    got: list[tuple[str, bytes]] = []
    sub = LocalBusClient(broker, "watch", lambda t, p: got.append((t, p)))
    sub.subscribe("epic/#")
    sim = ProcessSimulator(default_topology(), broker=broker, engine=engine)
    sim.start()
    engine.run_for(50.0)
    # one tick: 14 buses x 5 quantities + 11 breaker status topics
    assert len(got) == 14 * 5 + 11
    by_topic = dict(got)
    assert by_topic["epic/smarthome/Q4_1/status"] == b"1"
    snap = sim.snapshot()
    rec = snap.buses[sim.topology.bus_index["LB1_BUS"]]
    payload = by_topic["epic/smarthome/LB1_BUS/p"]
    assert payload.decode() == repr(rec.p_kw)
    assert float(payload) == rec.p_kw  # decimal text round-trips exactly
    assert by_topic["epic/generation/GBUS/f"] == repr(rec.frequency_hz).encode()


def test_command_via_bus_topic():
    engine = Engine(mode="fast")
    broker = Broker(engine=engine)
    sim = ProcessSimulator(default_topology(), broker=broker, engine=engine)
    sim.start()
    pub = LocalBusClient(broker, "ctl")
    pub.publish("epic/cmd/Q4_1", json.dumps(
        {"action": "open", "origin": "ctl", "seq": 1}).encode())
    engine.run_for(250.0)
    snap = sim.snapshot()
    assert {b.breaker_id: b.closed for b in snap.breakers}["Q4_1"] is False
    assert snap.buses[sim.topology.bus_index["LB1_BUS"]].voltage_ll == 0.0


def test_deterministic_snapshot_sequence():
    def run() -> list:
        engine = Engine(mode="fast")
        broker = Broker(engine=engine)
        sim = ProcessSimulator(default_topology(), broker=broker, engine=engine)
        snaps = []
        orig_step = sim.step

        def record():
            snaps.append(orig_step())

        sim.step = record  # capture every tick the engine drives
        sim.step()
        engine.call_at(300.0, lambda: sim.apply_command(
            ActuatorCommand("Q4_1", "open", origin="op", seq=1)))
        engine.call_at(700.0, lambda: sim.apply_command(
            ActuatorCommand("LB2", "set_percent", 30, origin="op", seq=2)))
        engine.run_until(2000.0)
        return snaps

    a = run()
    b = run()
    assert len(a) == len(b) > 15
    assert a == b  # dataclass equality covers every float bit-for-bit


def test_udp_mirror_datagrams():
    rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    rx.bind(("127.0.0.1", 0))
    rx.settimeout(5.0)
    port = rx.getsockname()[1]
    sim = ProcessSimulator(default_topology(), udp_mirror=("127.0.0.1", port))
    snap = sim.step()
    seen = {}
    for _ in range(14 * 5 + 11):
        topic, value = rx.recv(65536).decode().split("\n")
        seen[topic] = value
    rec = snap.buses[sim.topology.bus_index["LB1_BUS"]]
    assert seen["epic/smarthome/LB1_BUS/v"] == repr(rec.voltage_ll)
    assert seen["epic/smarthome/Q4_1/status"] == "1"
    rx.close()
