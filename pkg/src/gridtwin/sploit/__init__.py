"""Attack designer and launcher for man-in-the-middle experiments."""

from gridtwin.sploit.client import LauncherClient, SploitError, SploitRuntimeError
from gridtwin.sploit.attacks import (
    MODES,
    AttackHandle,
    AttackSpec,
    PlannedRule,
    Sploit,
    TargetMap,
    TargetPoint,
    plan_rules,
    record_disconnected_profile,
)
from gridtwin.sploit.scenario import (
    BUILTIN_SCENARIOS,
    ScenarioRun,
    ScenarioScript,
    ScenarioStep,
    build_pump_stays_on,
    execute_scenario,
    load_scenario_file,
    validate_scenario,
)

__all__ = [
    "AttackHandle",
    "AttackSpec",
    "BUILTIN_SCENARIOS",
    "LauncherClient",
    "MODES",
    "PlannedRule",
    "ScenarioRun",
    "ScenarioScript",
    "ScenarioStep",
    "Sploit",
    "SploitError",
    "SploitRuntimeError",
    "TargetMap",
    "TargetPoint",
    "build_pump_stays_on",
    "execute_scenario",
    "load_scenario_file",
    "plan_rules",
    "record_disconnected_profile",
    "validate_scenario",
]
