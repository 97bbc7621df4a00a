"""One-call composition of the full twin.

``Twin.up()`` starts every layer in dependency order — databus, virtual
network, process simulator, devices, supervisory engine, historian — and
tears the stack back down in reverse on failure, so a port conflict or a
bad config never leaves half a twin listening.  A small health endpoint
reports component status and doubles as the static file server for the
operator console.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import yaml

from gridtwin.databus.broker import Broker
from gridtwin.device.objects import default_roster, load_roster
from gridtwin.device.runtime import build_devices
from gridtwin.harness.config import TwinConfig
from gridtwin.historian.protocol import HistorianClient, HistorianServer
from gridtwin.historian.store import HistorianStore
from gridtwin.procsim.simulator import ProcessSimulator
from gridtwin.procsim.topology import default_topology, load_topology_file
from gridtwin.runtime import Engine
from gridtwin.scada.engine import ScadaEngine
from gridtwin.scada.gateway import Gateway
from gridtwin.vnet.fabric import Fabric, default_network_doc
from gridtwin.vnet.launcher import LauncherServer

logger = logging.getLogger(__name__)

START_ORDER = ("databus", "vnet", "procsim", "devices", "scada", "historian")


class TwinError(RuntimeError):
    """A component failed to start; everything already started was stopped."""


def _free_port(host: str) -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]


class Twin:
    """Lifecycle owner for one complete twin instance."""

    def __init__(self, cfg: TwinConfig | None = None):
        self.cfg = cfg if cfg is not None else TwinConfig()
        self.state = "down"
        self.components: dict[str, str] = {}
        self.ports: dict[str, int] = {}
        self._stops: list[tuple[str, object]] = []

        self.engine: Engine | None = None
        self.broker: Broker | None = None
        self.fabric: Fabric | None = None
        self.launcher: LauncherServer | None = None
        self.sim: ProcessSimulator | None = None
        self.roster: list = []
        self.devices: dict = {}
        self.scada: ScadaEngine | None = None
        self.gateway: Gateway | None = None
        self.store: HistorianStore | None = None
        self.historian_server: HistorianServer | None = None
        self.health_server: "HealthServer | None" = None

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def up(self) -> None:
        if self.state == "up":
            raise TwinError("twin is already up")
        cfg = self.cfg
        # Ephemeral ports are resolved up front so components that need a
        # peer's address before that peer starts (scada -> historian) get a
        # real number.
        self.ports = {
            name: getattr(cfg, f"{name}_port") or _free_port(cfg.host)
            for name in ("gateway", "launcher", "historian", "health")
        }
        current = "runtime"
        try:
            self.engine = Engine(mode=cfg.mode)
            if cfg.mode == "real":
                self.engine.start()
                self._stops.append(("runtime", self.engine.stop))

            current = "databus"
            self.broker = Broker(engine=self.engine)
            self.components["databus"] = "ready"

            current = "vnet"
            if cfg.network is None:
                doc = default_network_doc()
            else:
                with open(cfg.network, encoding="utf-8") as fh:
                    doc = yaml.safe_load(fh)
            self.fabric = Fabric(doc, engine=self.engine)
            self.launcher = LauncherServer(self.fabric, cfg.host,
                                           self.ports["launcher"])
            self.launcher.start()
            self._stops.append(("vnet", self.launcher.stop))
            self.components["vnet"] = "ready"

            current = "procsim"
            topo = default_topology() if cfg.topology is None else \
                load_topology_file(cfg.topology)
            self.sim = ProcessSimulator(topo, self.broker, self.engine,
                                        tick_ms=cfg.tick_ms)
            self.sim.start()
            self._stops.append(("procsim", self.sim.stop))
            self.components["procsim"] = "ready"

            current = "devices"
            if cfg.roster is None:
                roster = default_roster()
            else:
                with open(cfg.roster, encoding="utf-8") as fh:
                    roster = load_roster(yaml.safe_load(fh))
            self.roster = roster
            self.devices = build_devices(roster, self.fabric, self.broker,
                                         self.engine, tick_ms=cfg.tick_ms,
                                         poll_ms=cfg.poll_ms)
            self._stops.append(("devices", self._stop_devices))
            self.components["devices"] = "ready"

            current = "scada"
            hist_client = HistorianClient(cfg.host, self.ports["historian"])
            self.scada = ScadaEngine(roster, self.fabric, self.engine,
                                     poll_ms=cfg.poll_ms,
                                     historian=hist_client,
                                     push_ms=cfg.push_ms)
            self.scada.start()
            self._stops.append(("scada", self.scada.stop))
            self.gateway = Gateway(self.scada, credential=cfg.credential,
                                   historian_addr=(cfg.host, self.ports["historian"]),
                                   host=cfg.host, port=self.ports["gateway"])
            self.gateway.start()
            self._stops.append(("scada", self.gateway.stop))
            self.components["scada"] = "ready"

            current = "historian"
            self.store = HistorianStore(cfg.historian_db)
            self._stops.append(("historian", self.store.close))
            self.historian_server = HistorianServer(self.store, cfg.host,
                                                    self.ports["historian"])
            self.historian_server.start()
            self._stops.append(("historian", self.historian_server.stop))
            self.components["historian"] = "ready"

            current = "health"
            self.health_server = HealthServer(self, cfg.host,
                                              self.ports["health"])
            self.health_server.start()
            self._stops.append(("health", self.health_server.stop))
        except Exception as exc:
            self.down()
            raise TwinError(f"startup failed at component {current!r}: {exc}") from exc
        self.state = "up"
        logger.info("twin up: gateway=%d launcher=%d historian=%d health=%d",
                    self.ports["gateway"], self.ports["launcher"],
                    self.ports["historian"], self.ports["health"])

    def down(self) -> None:
        """Stop everything in reverse start order.  Safe to call twice."""
        stops, self._stops = self._stops, []
        for name, stop in reversed(stops):
            try:
                stop()
            except Exception:
                logger.exception("while stopping %s", name)
        self.components.clear()
        self.state = "down"

    def _stop_devices(self) -> None:
        for device in self.devices.values():
            device.stop()

    # ------------------------------------------------------------------
    # conveniences
    # ------------------------------------------------------------------

    def wait(self, ms: float) -> None:
        """Let the twin run: virtual time in fast mode, wall time otherwise."""
        if self.cfg.mode == "fast":
            self.engine.run_for(ms)
        else:
            time.sleep(ms / 1000.0)

    def health(self) -> dict:
        return {
            "ok": self.state == "up",
            "state": self.state,
            "mode": self.cfg.mode,
            "now_ms": self.engine.now_ms() if self.engine else 0.0,
            "components": {name: self.components.get(name, "down")
                           for name in START_ORDER},
            "devices": len(self.devices),
            "ports": dict(self.ports),
        }

    def truth(self) -> dict:
        """Process-model ground truth for the console's teaching view.

        Deliberately separate from the supervisory gateway: the operator
        surface stays deceivable, while this endpoint shows what the grid
        is actually doing.
        """
        if self.sim is None:
            return {"ok": False, "error": "twin is down"}
        snap = self.sim.snapshot()
        return {
            "ok": True,
            "now_ms": snap.timestamp_ms,
            "degraded": snap.degraded,
            "breakers": {b.breaker_id: b.closed for b in snap.breakers},
            "buses": [{
                "bus_id": rec.bus_id,
                "zone": rec.zone,
                "voltage_ll": rec.voltage_ll,
                "current_a": rec.current_a,
                "p_kw": rec.p_kw,
                "q_kvar": rec.q_kvar,
                "frequency_hz": rec.frequency_hz,
            } for rec in snap.buses],
        }


# ----------------------------------------------------------------------
# health endpoint + console asset server
# ----------------------------------------------------------------------

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
}


class _HealthHandler(BaseHTTPRequestHandler):
    server_version = "twin-health/1.0"
    twin: Twin = None

    def log_message(self, fmt, *args):
        logger.debug("health: " + fmt, *args)

    def _send_json(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/health":
            self._send_json(200, self.twin.health())
            return
        if path == "/truth":
            payload = self.twin.truth()
            self._send_json(200 if payload["ok"] else 503, payload)
            return
        self._serve_static(path)

    def do_POST(self):
        if self.path.split("?", 1)[0] != "/shutdown":
            self._send_json(404, {"ok": False, "error": "unknown endpoint"})
            return
        self._send_json(202, {"ok": True, "stopping": True})
        # Stop from a fresh thread: down() joins this server's accept loop,
        # which must not happen while we are still inside a handler.
        threading.Timer(0.05, self.twin.down).start()

    def _serve_static(self, path: str) -> None:
        root = self.twin.cfg.static_dir
        if root is None:
            self._send_json(404, {"ok": False, "error": "no console assets configured"})
            return
        rel = path.lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(root, rel))
        if not full.startswith(os.path.realpath(root) + os.sep) \
                and full != os.path.realpath(root):
            self._send_json(404, {"ok": False, "error": "not found"})
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._send_json(404, {"ok": False, "error": "not found"})
            return
        ext = os.path.splitext(full)[1].lower()
        ctype = _CONTENT_TYPES.get(ext) or mimetypes.guess_type(full)[0] \
            or "application/octet-stream"
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class HealthServer:
    def __init__(self, twin: Twin, host: str = "127.0.0.1", port: int = 0):
        self.twin = twin
        self.host = host
        self.port = port
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> int:
        twin = self.twin

        class Handler(_HealthHandler):
            pass

        Handler.twin = twin
        self._httpd = ThreadingHTTPServer((self.host, self.port), Handler)
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="twin-health", daemon=True)
        self._thread.start()
        return self.port

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=5.0)
        self._thread = None
