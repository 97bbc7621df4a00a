"""Operator gateway: HTTP JSON API plus a server-push event stream.

This is the only surface the HMI and the attack CLI talk to; the wire
schema is documented in ``docs/gateway-api.md``.  Endpoints:

- ``GET  /health``   liveness and twin clock
- ``GET  /tags``     consistent snapshot, filters: name/zone/kind/device
- ``POST /write``    operator command (static credential required)
- ``GET  /commands`` the command ledger, newest last
- ``GET  /history``  range query proxied to the historian
- ``GET  /stream``   text/event-stream: snapshot, then every tag change

Snapshot reads are consistent cuts of the tag database.  The stream
delivers changes in journal order; subscribers that stop reading are
dropped.  All responses carry permissive CORS headers so the HMI can be
served from anywhere.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from gridtwin.historian.protocol import HistorianClient, sample_to_json
from gridtwin.historian.store import AGGREGATES, HistorianError
from gridtwin.scada.engine import ScadaEngine
from gridtwin.scada.tags import ScadaError, Tag

logger = logging.getLogger(__name__)

DEFAULT_PORT = 18830
DEFAULT_CREDENTIAL = "epic-operator"
STREAM_KEEPALIVE_S = 10.0


class Gateway:
    """HTTP front end over one supervisory engine."""

    def __init__(
        self,
        scada: ScadaEngine,
        *,
        credential: str = DEFAULT_CREDENTIAL,
        historian_addr: tuple[str, int] | None = None,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
    ):
        self.scada = scada
        self.credential = credential
        self.historian_addr = historian_addr
        self.host = host
        self.port = port
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self._streams: set[queue.Queue] = set()
        self._stream_lock = threading.Lock()
        self.scada.tags.subscribe(self._on_changes)

    # ------------------------------------------------------------------
    # lifecycle
    # ------------------------------------------------------------------

    def start(self) -> int:
        gateway = self

        class Handler(_GatewayHandler):
            gw = gateway

        self._httpd = ThreadingHTTPServer((self.host, self.port), Handler)
        self._httpd.daemon_threads = True
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="gateway", daemon=True)
        self._thread.start()
        logger.info("gateway on http://%s:%d", self.host, self.port)
        return self.port

    def stop(self) -> None:
        with self._stream_lock:
            streams = list(self._streams)
        for q in streams:
            q.put(None)                      # unblock stream writers
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self.scada.tags.unsubscribe(self._on_changes)

    # ------------------------------------------------------------------
    # stream fan-out
    # ------------------------------------------------------------------

    def _on_changes(self, changed: list[Tag]) -> None:
        payload = {
            "tags": [t.to_json() for t in changed],
            "now_ms": self.scada.engine.now_ms(),
        }
        with self._stream_lock:
            streams = list(self._streams)
        for q in streams:
            q.put(("update", payload))

    def stream_register(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._stream_lock:
            self._streams.add(q)
        return q

    def stream_unregister(self, q: queue.Queue) -> None:
        with self._stream_lock:
            self._streams.discard(q)


class _GatewayHandler(BaseHTTPRequestHandler):
    gw: Gateway = None  # bound by Gateway.start
    protocol_version = "HTTP/1.1"

    # quiet the default stderr access log
    def log_message(self, fmt, *args):
        logger.debug("gateway %s", fmt % args)

    # ------------------------------------------------------------------
    # plumbing
    # ------------------------------------------------------------------

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers",
                         "Content-Type, X-Auth-Token")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")

    def _json(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> dict | None:
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b"{}"
            body = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None
        return body if isinstance(body, dict) else None

    # ------------------------------------------------------------------
    # routing
    # ------------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        params = {k: v[0] for k, v in parse_qs(url.query).items()}
        route = url.path.rstrip("/") or "/"
        try:
            if route == "/health":
                self._json(200, {"ok": True,
                                 "now_ms": self.gw.scada.engine.now_ms(),
                                 "devices": len(self.gw.scada.configs)})
            elif route == "/tags":
                self._get_tags(params)
            elif route == "/commands":
                self._get_commands(params)
            elif route == "/history":
                self._get_history(params)
            elif route == "/stream":
                self._get_stream()
            else:
                self._json(404, {"ok": False, "error": f"no route {route}"})
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as exc:
            logger.exception("gateway GET %s failed", self.path)
            try:
                self._json(500, {"ok": False, "error": str(exc)})
            except OSError:
                pass

    def do_POST(self):
        url = urlparse(self.path)
        route = url.path.rstrip("/")
        if route != "/write":
            self._json(404, {"ok": False, "error": f"no route {route}"})
            return
        self._post_write()

    # ------------------------------------------------------------------
    # endpoints
    # ------------------------------------------------------------------

    def _get_tags(self, params: dict) -> None:
        snap = self.gw.scada.tags.snapshot()
        name = params.get("name")
        if name is not None:
            tag = snap.get(name)
            if tag is None:
                self._json(404, {"ok": False, "error": f"unknown tag {name}"})
                return
            self._json(200, {"ok": True, "tag": tag.to_json(),
                             "now_ms": self.gw.scada.engine.now_ms()})
            return
        tags = [
            t.to_json() for t in snap.values()
            if (("zone" not in params or t.zone == params["zone"])
                and ("kind" not in params or t.kind == params["kind"])
                and ("device" not in params or t.device == params["device"]))
        ]
        self._json(200, {"ok": True, "tags": tags,
                         "now_ms": self.gw.scada.engine.now_ms()})

    def _get_commands(self, params: dict) -> None:
        records = self.gw.scada.commands
        if "cmd_id" in params:
            record = self.gw.scada.find_command(int(params["cmd_id"]))
            if record is None:
                self._json(404, {"ok": False, "error": "unknown cmd_id"})
                return
            self._json(200, {"ok": True, "command": record.to_json()})
            return
        limit = int(params.get("limit", "0"))
        out = [r.to_json() for r in records]
        if limit > 0:
            out = out[-limit:]
        self._json(200, {"ok": True, "commands": out})

    def _get_history(self, params: dict) -> None:
        if self.gw.historian_addr is None:
            self._json(503, {"ok": False, "error": "no historian configured"})
            return
        tag = params.get("tag")
        if not tag:
            self._json(400, {"ok": False, "error": "tag parameter required"})
            return
        try:
            t0 = float(params.get("t0", "0"))
            t1 = float(params.get("t1", str(self.gw.scada.engine.now_ms())))
        except ValueError:
            self._json(400, {"ok": False, "error": "t0/t1 must be numbers"})
            return
        aggregate = params.get("aggregate", "raw")
        if aggregate not in AGGREGATES:
            self._json(400, {"ok": False,
                             "error": f"aggregate must be one of {AGGREGATES}"})
            return
        host, port = self.gw.historian_addr
        client = HistorianClient(host, port)
        try:
            result = client.query(tag, t0, t1, aggregate)
        except ConnectionError as exc:
            self._json(502, {"ok": False, "error": f"historian unreachable: {exc}"})
            return
        except HistorianError as exc:
            status = 404 if "not found" in str(exc) else 400
            self._json(status, {"ok": False, "error": str(exc)})
            return
        finally:
            client.close()
        if aggregate == "raw":
            body = {"ok": True, "samples": [sample_to_json(s) for s in result]}
        elif aggregate == "last":
            body = {"ok": True,
                    "sample": sample_to_json(result) if result else None}
        else:
            body = {"ok": True, "value": result}
        self._json(200, body)

    def _post_write(self) -> None:
        body = self._read_body()
        if body is None:
            self._json(400, {"ok": False, "error": "body must be a JSON object"})
            return
        credential = self.headers.get("X-Auth-Token") or body.get("credential")
        if credential != self.gw.credential:
            self._json(401, {"ok": False, "error": "bad credentials"})
            return
        tag = body.get("tag")
        if not isinstance(tag, str) or "value" not in body:
            self._json(400, {"ok": False, "error": "tag and value required"})
            return
        operator = body.get("operator", "operator")
        try:
            record = self.gw.scada.write_tag(operator, tag, body["value"])
        except KeyError:
            self._json(404, {"ok": False, "error": f"unknown tag {tag}"})
            return
        except ScadaError as exc:
            self._json(403, {"ok": False, "error": str(exc)})
            return
        self._json(202, {"ok": True, "command": record.to_json()})

    def _get_stream(self) -> None:
        q = self.gw.stream_register()
        try:
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            self._sse("retry", None, raw="retry: 2000\n\n")
            snapshot = {
                "tags": [t.to_json()
                         for t in self.gw.scada.tags.snapshot().values()],
                "now_ms": self.gw.scada.engine.now_ms(),
            }
            self._sse("snapshot", snapshot)
            while True:
                try:
                    item = q.get(timeout=STREAM_KEEPALIVE_S)
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                if item is None:          # gateway shutting down
                    return
                event, payload = item
                self._sse(event, payload)
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.gw.stream_unregister(q)
            self.close_connection = True

    def _sse(self, event: str, payload: dict | None, raw: str | None = None) -> None:
        if raw is None:
            raw = f"event: {event}\ndata: {json.dumps(payload)}\n\n"
        self.wfile.write(raw.encode())
        self.wfile.flush()
