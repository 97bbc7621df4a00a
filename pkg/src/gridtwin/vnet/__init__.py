"""Application-level switched network with interception hooks."""

from gridtwin.vnet.rules import (
    InterceptRule,
    RuleAction,
    RuleError,
    RuleMatch,
    register_transform,
    value_from_json,
    value_to_json,
)
from gridtwin.vnet.fabric import (
    CaptureRecord,
    DeliveredFrame,
    Endpoint,
    Fabric,
    FabricError,
    default_network_doc,
)
from gridtwin.vnet.launcher import DEFAULT_PORT, LauncherServer
from gridtwin.vnet.pcap import write_pcap

__all__ = [
    "CaptureRecord",
    "DEFAULT_PORT",
    "DeliveredFrame",
    "Endpoint",
    "Fabric",
    "FabricError",
    "InterceptRule",
    "LauncherServer",
    "RuleAction",
    "RuleError",
    "RuleMatch",
    "default_network_doc",
    "register_transform",
    "value_from_json",
    "value_to_json",
    "write_pcap",
]
