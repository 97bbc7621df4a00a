"""Supervisory layer: acquisition polling, tag database, command ledger,
historian feed, and the operator gateway (HTTP + event stream)."""

from gridtwin.scada.engine import (
    BUFFER_MAX,
    DEFAULT_POLL_MS,
    READBACK_CYCLES,
    REQUEST_TIMEOUT_MS,
    STALE_AFTER_MISSES,
    CommandRecord,
    CycleStats,
    ScadaEngine,
)
from gridtwin.scada.gateway import DEFAULT_CREDENTIAL, DEFAULT_PORT, Gateway
from gridtwin.scada.tags import ScadaError, Tag, TagDB

__all__ = [
    "BUFFER_MAX",
    "DEFAULT_POLL_MS",
    "READBACK_CYCLES",
    "REQUEST_TIMEOUT_MS",
    "STALE_AFTER_MISSES",
    "CommandRecord",
    "CycleStats",
    "ScadaEngine",
    "DEFAULT_CREDENTIAL",
    "DEFAULT_PORT",
    "Gateway",
    "ScadaError",
    "Tag",
    "TagDB",
]
