"""Balanced positive-sequence nodal solver.

One solve per tick: build the bus admittance matrix from in-service branches,
pin voltage-regulating source terminals at 1.0 pu, and iterate the constant-PQ
injections to a fixed point.  Islands without a voltage-regulating source are
de-energized exactly (V = 0).

Conventions
-----------
* per-unit on ``topology.s_base_kva`` / ``topology.v_nominal_ll``
* bus power is reported consumption-positive (a source bus shows negative kW)
* bus current is the net injected/drawn current magnitude in amperes,
  ``|S| / (sqrt(3) * V_ll)``
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from gridtwin.procsim.topology import Branch, GridTopology

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 50
TOLERANCE_PU = 1e-9


@dataclass
class SolveResult:
    converged: bool
    v_pu: np.ndarray             # complex voltage per bus (topology order)
    s_drawn_pu: np.ndarray       # complex power drawn per bus, consumption +
    branch_current_pu: dict[str, complex]  # from_bus -> to_bus direction
    energized: np.ndarray        # bool per bus
    p_loss_pu: float
    q_loss_pu: float


def in_service_branches(topo: GridTopology, breaker_closed: dict[str, bool]) -> list[Branch]:
    """Branches carrying current: every breaker on the branch is closed."""
    live = []
    for br in topo.branches:
        if all(breaker_closed[bk.id] for bk in topo.breakers_on(br.id)):
            live.append(br)
    return live


def _components(topo: GridTopology, branches: list[Branch]) -> list[set[int]]:
    adj: dict[int, set[int]] = {i: set() for i in range(len(topo.buses))}
    for br in branches:
        a = topo.bus_index[br.from_bus]
        b = topo.bus_index[br.to_bus]
        adj[a].add(b)
        adj[b].add(a)
    seen: set[int] = set()
    comps = []
    for start in range(len(topo.buses)):
        if start in seen:
            continue
        comp = {start}
        frontier = [start]
        while frontier:
            n = frontier.pop()
            for m in adj[n]:
                if m not in comp:
                    comp.add(m)
                    frontier.append(m)
        seen |= comp
        comps.append(comp)
    return comps


def solve_network(
    topo: GridTopology,
    breaker_closed: dict[str, bool],
    load_setpoints: dict[str, int],
    source_injections: dict[str, complex] | None = None,
) -> SolveResult:
    """Solve the network for the given switching/setpoint state.

    ``source_injections`` overrides the scheduled P/Q of PQ-kind sources
    (values in kVA complex, injection positive); defaults to the topology's
    scheduled values.
    """
    n = len(topo.buses)
    s_base = topo.s_base_kva

    # net scheduled injection per bus, pu, generation positive
    s_inj = np.zeros(n, dtype=complex)
    for src in topo.sources:
        if src.is_voltage_source:
            continue
        inj = (source_injections or {}).get(src.id, complex(src.p_kw, src.q_kvar))
        s_inj[topo.bus_index[src.bus]] += inj / s_base
    for load in topo.loads:
        demand = load.demand_kva(load_setpoints[load.id])
        s_inj[topo.bus_index[load.bus]] -= demand / s_base

    fixed = np.zeros(n, dtype=bool)
    for src in topo.sources:
        if src.is_voltage_source:
            fixed[topo.bus_index[src.bus]] = True

    branches = in_service_branches(topo, breaker_closed)
    ybus = np.zeros((n, n), dtype=complex)
    for br in branches:
        a = topo.bus_index[br.from_bus]
        b = topo.bus_index[br.to_bus]
        y = 1.0 / br.series_impedance
        ybus[a, a] += y
        ybus[b, b] += y
        ybus[a, b] -= y
        ybus[b, a] -= y

    v = np.zeros(n, dtype=complex)
    energized = np.zeros(n, dtype=bool)
    converged = True

    for comp in _components(topo, branches):
        comp_fixed = [i for i in sorted(comp) if fixed[i]]
        if not comp_fixed:
            continue  # dead island: stays exactly zero
        energized[list(comp)] = True
        v[comp_fixed] = 1.0 + 0.0j
        unknown = [i for i in sorted(comp) if not fixed[i]]
        if not unknown:
            continue
        y_uu = ybus[np.ix_(unknown, unknown)]
        y_uf = ybus[np.ix_(unknown, comp_fixed)]
        v_f = v[comp_fixed]
        s_u = s_inj[unknown]
        v_u = np.ones(len(unknown), dtype=complex)
        ok = False
        for _ in range(MAX_ITERATIONS):
            i_inj = np.conj(s_u / v_u)
            v_next = np.linalg.solve(y_uu, i_inj - y_uf @ v_f)
            delta = float(np.max(np.abs(v_next - v_u)))
            v_u = v_next
            if delta < TOLERANCE_PU:
                ok = True
                break
        if not ok:
            converged = False
            logger.warning("solver did not converge for island %s", sorted(comp))
        v[unknown] = v_u

    # solved injections: S_i = V_i * conj(sum_j Y_ij V_j); consumption = -inj
    i_bus = ybus @ v
    s_solved_inj = v * np.conj(i_bus)
    s_drawn = -s_solved_inj
    # exact zeros on dead islands
    s_drawn[~energized] = 0.0

    branch_current: dict[str, complex] = {}
    p_loss = 0.0
    q_loss = 0.0
    for br in branches:
        a = topo.bus_index[br.from_bus]
        b = topo.bus_index[br.to_bus]
        i_br = (v[a] - v[b]) / br.series_impedance
        branch_current[br.id] = i_br
        flow = abs(i_br) ** 2
        p_loss += flow * br.r_pu
        q_loss += flow * br.x_pu

    return SolveResult(
        converged=converged,
        v_pu=v,
        s_drawn_pu=s_drawn,
        branch_current_pu=branch_current,
        energized=energized,
        p_loss_pu=p_loss,
        q_loss_pu=q_loss,
    )
