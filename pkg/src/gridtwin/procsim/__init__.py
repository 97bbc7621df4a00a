"""Electrical process simulation: topology model, nodal solver, tick loop."""

from gridtwin.procsim.topology import (
    Branch,
    Breaker,
    Bus,
    GridTopology,
    Load,
    Source,
    TopologyError,
    ZONES,
    default_topology,
    default_topology_doc,
    load_topology,
    load_topology_file,
)
from gridtwin.procsim.solver import SolveResult, solve_network
from gridtwin.procsim.simulator import (
    ActuatorCommand,
    BreakerRecord,
    BusRecord,
    CommandAck,
    ElectricalSnapshot,
    ProcessSimulator,
)

__all__ = [
    "ActuatorCommand",
    "Branch",
    "Breaker",
    "BreakerRecord",
    "Bus",
    "BusRecord",
    "CommandAck",
    "ElectricalSnapshot",
    "GridTopology",
    "Load",
    "ProcessSimulator",
    "SolveResult",
    "Source",
    "TopologyError",
    "ZONES",
    "default_topology",
    "default_topology_doc",
    "load_topology",
    "load_topology_file",
    "solve_network",
]
