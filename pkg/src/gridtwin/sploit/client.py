"""Line-JSON client for the switch launcher control API.

One persistent connection, synchronous request/response.  Connection
problems and launcher refusals both surface as :class:`SploitRuntimeError`
so callers can distinguish "the attack is invalid" (:class:`SploitError`,
raised before any traffic) from "the launcher said no or went away".
"""

from __future__ import annotations

import json
import socket

from gridtwin.vnet.launcher import DEFAULT_PORT


class SploitError(ValueError):
    """The attack or scenario is malformed; nothing was installed."""


class SploitRuntimeError(RuntimeError):
    """The launcher refused an operation or became unreachable."""


class LauncherClient:
    """Thin synchronous client; scripted and interactive use share it."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 timeout_s: float = 5.0):
        self.host = host
        self.port = port
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None
        self._fh = None

    def _connect(self) -> None:
        if self._sock is not None:
            return
        try:
            self._sock = socket.create_connection(
                (self.host, self.port), timeout=self.timeout_s)
            self._fh = self._sock.makefile("rwb")
        except OSError as exc:
            self._sock = None
            raise SploitRuntimeError(
                f"launcher unreachable at {self.host}:{self.port}: {exc}") from exc

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._fh.close()
                self._sock.close()
            except OSError:
                pass
            self._sock = None
            self._fh = None

    def call(self, **req) -> dict:
        """Send one request, return the raw response object."""
        self._connect()
        try:
            self._fh.write(json.dumps(req).encode("utf-8") + b"\n")
            self._fh.flush()
            line = self._fh.readline()
        except OSError as exc:
            self.close()
            raise SploitRuntimeError(f"launcher connection lost: {exc}") from exc
        if not line:
            self.close()
            raise SploitRuntimeError("launcher closed the connection")
        return json.loads(line)

    def _ok(self, **req) -> dict:
        resp = self.call(**req)
        if not resp.get("ok"):
            raise SploitRuntimeError(
                f"launcher refused {req.get('op')}: {resp.get('error')}")
        return resp

    # ------------------------------------------------------------------
    # launcher grammar, one helper per op
    # ------------------------------------------------------------------

    def install(self, switch: str, rule: dict, *, rule_id: str | None = None,
                client: str = "sploit") -> str:
        if rule_id is not None:
            rule = dict(rule, rule_id=rule_id)
        return self._ok(op="install", switch=switch, rule=rule,
                        client=client)["rule_id"]

    def remove(self, switch: str, rule_id: str) -> bool:
        return self._ok(op="remove", switch=switch, rule_id=rule_id)["removed"]

    def rules(self, switch: str | None = None) -> list[dict]:
        req = {"op": "list"}
        if switch is not None:
            req["switch"] = switch
        return self._ok(**req)["rules"]

    def stats(self) -> dict:
        return self._ok(op="stats")

    def watch(self, switch: str, match: dict, install: list[dict], *,
              client: str = "sploit") -> str:
        return self._ok(op="watch", switch=switch, match=match,
                        install=install, client=client)["watch_id"]

    def watches(self) -> list[dict]:
        return self._ok(op="watches")["watches"]

    def unwatch(self, switch: str, watch_id: str) -> bool:
        return self._ok(op="unwatch", switch=switch, watch_id=watch_id)["removed"]
