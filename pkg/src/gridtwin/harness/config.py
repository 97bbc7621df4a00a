"""Whole-twin configuration: one file describes the entire composition.

Paths left unset fall back to the packaged defaults, so ``TwinConfig()`` is
a complete, runnable configuration.  Every address can be overridden by an
environment variable (``TWIN_GATEWAY_PORT`` and friends), and the config
file itself is found via ``--config`` or ``TWIN_CONFIG``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from importlib import resources

import yaml

from gridtwin.scada.gateway import DEFAULT_CREDENTIAL

DEFAULT_CONFIG_RESOURCE = "twin.yaml"
CONFIG_ENV_VAR = "TWIN_CONFIG"

# field name -> environment override
ENV_OVERRIDES = {
    "mode": "TWIN_MODE",
    "host": "TWIN_HOST",
    "gateway_port": "TWIN_GATEWAY_PORT",
    "launcher_port": "TWIN_LAUNCHER_PORT",
    "historian_port": "TWIN_HISTORIAN_PORT",
    "health_port": "TWIN_HEALTH_PORT",
    "historian_db": "TWIN_HISTORIAN_DB",
    "static_dir": "TWIN_STATIC_DIR",
    "tick_ms": "TWIN_TICK_MS",
    "poll_ms": "TWIN_POLL_MS",
    "seed": "TWIN_SEED",
}


class TwinConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TwinConfig:
    topology: str | None = None       # None -> packaged grid model
    roster: str | None = None         # None -> packaged device roster
    network: str | None = None        # None -> packaged switch layout
    tick_ms: float = 100.0
    poll_ms: float = 1000.0
    push_ms: float = 1000.0
    mode: str = "real"                # real | fast
    host: str = "127.0.0.1"
    gateway_port: int = 18830
    launcher_port: int = 18831
    historian_port: int = 18832
    health_port: int = 18829
    historian_db: str = ":memory:"
    credential: str = DEFAULT_CREDENTIAL
    static_dir: str | None = None     # operator console assets, if built
    seed: int = 0                     # feeds any randomized experiment steps

    def __post_init__(self):
        if self.mode not in ("real", "fast"):
            raise TwinConfigError(f"mode must be 'real' or 'fast', got {self.mode!r}")
        for name in ("tick_ms", "poll_ms", "push_ms"):
            if getattr(self, name) <= 0:
                raise TwinConfigError(f"{name} must be positive")
        for name in ("topology", "roster", "network", "static_dir"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise TwinConfigError(f"{name} file does not exist: {path}")
        ports: dict[int, str] = {}
        for name in ("gateway_port", "launcher_port", "historian_port",
                     "health_port"):
            port = getattr(self, name)
            if not isinstance(port, int) or not (0 <= port <= 65535):
                raise TwinConfigError(f"{name} must be a port number, got {port!r}")
            if port != 0 and port in ports:
                raise TwinConfigError(
                    f"{name} conflicts with {ports[port]}: both want port {port}")
            ports[port] = name
        if not isinstance(self.seed, int):
            raise TwinConfigError(f"seed must be an integer, got {self.seed!r}")

    @staticmethod
    def from_dict(doc: dict) -> "TwinConfig":
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise TwinConfigError("twin config must be a mapping")
        known = {f.name for f in fields(TwinConfig)}
        unknown = set(doc) - known
        if unknown:
            raise TwinConfigError(f"unknown config fields {sorted(unknown)}")
        return TwinConfig(**doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def default_config_text() -> str:
    return resources.files("gridtwin.configs").joinpath(
        DEFAULT_CONFIG_RESOURCE).read_text("utf-8")


def load_twin_config(path: str | None = None, env: dict | None = None) -> TwinConfig:
    """Load from ``path``, else ``$TWIN_CONFIG``, else the packaged default;
    then apply per-field environment overrides."""
    env = env if env is not None else os.environ
    path = path or env.get(CONFIG_ENV_VAR)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError as exc:
            raise TwinConfigError(f"config file does not exist: {path}") from exc
    else:
        text = default_config_text()
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise TwinConfigError(f"cannot parse twin config: {exc}") from exc
    if not isinstance(doc, dict):
        raise TwinConfigError("twin config must be a mapping")

    for name, var in ENV_OVERRIDES.items():
        raw = env.get(var)
        if raw is None:
            continue
        if name.endswith("_port") or name == "seed":
            try:
                doc[name] = int(raw)
            except ValueError as exc:
                raise TwinConfigError(f"{var} must be an integer, got {raw!r}") from exc
        elif name.endswith("_ms"):
            try:
                doc[name] = float(raw)
            except ValueError as exc:
                raise TwinConfigError(f"{var} must be a number, got {raw!r}") from exc
        else:
            doc[name] = raw
    return TwinConfig.from_dict(doc)
