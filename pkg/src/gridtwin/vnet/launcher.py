"""Attack-launcher control endpoint: line-delimited JSON over TCP.

One request per line, one JSON response per line.  Operations: install,
remove, list, stats, watch, watches.  The full grammar lives in
docs/launcher-api.md; the attack CLI speaks this protocol.
"""

from __future__ import annotations

import json
import logging
import socket
import threading

from gridtwin.vnet.fabric import Fabric, FabricError
from gridtwin.vnet.rules import RuleError

logger = logging.getLogger(__name__)

DEFAULT_PORT = 18831


class LauncherServer:
    def __init__(self, fabric: Fabric, host: str = "127.0.0.1", port: int = DEFAULT_PORT):
        self.fabric = fabric
        self.host = host
        self.port = port
        self._sock: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._conns: set[socket.socket] = set()
        self._conn_lock = threading.Lock()

    def start(self) -> int:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self.port))
        sock.listen(8)
        self._sock = sock
        self.port = sock.getsockname()[1]
        t = threading.Thread(target=self._accept_loop, name="launcher-accept", daemon=True)
        t.start()
        self._threads.append(t)
        logger.info("launcher control api on %s:%d", self.host, self.port)
        return self.port

    def stop(self) -> None:
        if self._sock is not None:
            try:
                # shutdown wakes a thread blocked in accept(); close alone
                # leaves the listener alive until that syscall returns
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None
        with self._conn_lock:
            conns, self._conns = self._conns, set()
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass

    def _accept_loop(self) -> None:
        assert self._sock is not None
        while True:
            try:
                conn, addr = self._sock.accept()
            except OSError:
                return
            with self._conn_lock:
                self._conns.add(conn)
            t = threading.Thread(target=self._serve, args=(conn, addr),
                                 name=f"launcher-{addr[1]}", daemon=True)
            t.start()

    def _serve(self, conn: socket.socket, addr) -> None:
        client = f"{addr[0]}:{addr[1]}"
        try:
            with conn, conn.makefile("rwb") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    response = self.handle_line(line.decode("utf-8", "replace"), client)
                    fh.write(json.dumps(response).encode() + b"\n")
                    fh.flush()
        except (OSError, ValueError):
            pass
        finally:
            with self._conn_lock:
                self._conns.discard(conn)

    def handle_line(self, line: str, client: str = "local") -> dict:
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"ok": False, "error": f"bad json: {exc}"}
        if not isinstance(req, dict) or "op" not in req:
            return {"ok": False, "error": "request must be an object with an op"}
        op = req["op"]
        installed_by = req.get("client", client)
        try:
            if op == "install":
                rule_id = self.fabric.install_rule(
                    req["switch"], req["rule"], installed_by=installed_by)
                return {"ok": True, "rule_id": rule_id}
            if op == "remove":
                removed = self.fabric.remove_rule(req["switch"], req["rule_id"])
                return {"ok": True, "removed": removed}
            if op == "list":
                return {"ok": True, "rules": self.fabric.list_rules(req.get("switch"))}
            if op == "stats":
                return {"ok": True, **self.fabric.stats()}
            if op == "watch":
                watch_id = self.fabric.install_watch(
                    req["switch"], req.get("match") or {},
                    req.get("install") or [], installed_by=installed_by)
                return {"ok": True, "watch_id": watch_id}
            if op == "watches":
                return {"ok": True, "watches": self.fabric.list_watches()}
            if op == "unwatch":
                removed = self.fabric.remove_watch(req["switch"], req["watch_id"])
                return {"ok": True, "removed": removed}
            return {"ok": False, "error": f"unknown op {op!r}"}
        except (FabricError, RuleError, KeyError, TypeError, ValueError) as exc:
            return {"ok": False, "error": str(exc)}
