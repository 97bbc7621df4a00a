"""Sample-transfer protocol: line-delimited JSON over TCP.

One request per line, one response per line (grammar in
docs/historian-protocol.md).  The supervisory engine pushes ordered,
acknowledged sample batches; queries ride the same connection.  JSON carries
values natively (bool/int/float/str survive the round trip exactly thanks to
shortest-repr float serialization).
"""

from __future__ import annotations

import json
import logging
import socket
import sqlite3
import threading

from gridtwin.historian.store import AGGREGATES, HistorianError, HistorianStore, TagSample

logger = logging.getLogger(__name__)

DEFAULT_PORT = 18832


def sample_to_json(s: TagSample) -> dict:
    return {"tag": s.tag, "seq": s.seq, "value": s.value,
            "quality": s.quality, "scada_ts": s.scada_ts}


def sample_from_json(obj: dict) -> TagSample:
    try:
        return TagSample(tag=obj["tag"], seq=int(obj["seq"]), value=obj["value"],
                         quality=obj.get("quality", "good"),
                         scada_ts=float(obj["scada_ts"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise HistorianError(f"bad sample {obj!r}: {exc}") from exc


class HistorianServer:
    def __init__(self, store: HistorianStore, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT):
        self.store = store
        self.host = host
        self.port = port
        self._sock: socket.socket | None = None
        self._conns: set[socket.socket] = set()
        self._conn_lock = threading.Lock()

    def start(self) -> int:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self.port))
        sock.listen(8)
        self._sock = sock
        self.port = sock.getsockname()[1]
        threading.Thread(target=self._accept_loop, name="historian-accept",
                         daemon=True).start()
        logger.info("historian append/query api on %s:%d", self.host, self.port)
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
        sock = self._sock
        while sock is not None:
            try:
                conn, addr = sock.accept()
            except OSError:
                return
            with self._conn_lock:
                self._conns.add(conn)
            threading.Thread(target=self._serve, args=(conn,),
                             name=f"historian-{addr[1]}", daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        try:
            with conn, conn.makefile("rwb") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    response = self.handle_line(line.decode("utf-8", "replace"))
                    fh.write(json.dumps(response).encode() + b"\n")
                    fh.flush()
        except (OSError, ValueError):
            pass
        finally:
            with self._conn_lock:
                self._conns.discard(conn)

    def handle_line(self, line: str) -> dict:
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"ok": False, "error": f"bad json: {exc}"}
        if not isinstance(req, dict) or "op" not in req:
            return {"ok": False, "error": "request must be an object with an op"}
        op = req["op"]
        try:
            if op == "append":
                batch = [sample_from_json(s) for s in req.get("batch") or []]
                return {"ok": True, "acks": self.store.append(batch)}
            if op == "acks":
                return {"ok": True, "acks": self.store.acks()}
            if op == "tags":
                return {"ok": True, "tags": self.store.tags()}
            if op == "count":
                return {"ok": True, "count": self.store.count(req.get("tag"))}
            if op == "query":
                aggregate = req.get("aggregate", "raw")
                result = self.store.query(req["tag"], float(req["t0"]),
                                          float(req["t1"]), aggregate)
                if aggregate == "raw":
                    return {"ok": True, "samples": [sample_to_json(s) for s in result]}
                if aggregate == "last":
                    return {"ok": True,
                            "sample": None if result is None else sample_to_json(result)}
                return {"ok": True, "value": result}
            return {"ok": False, "error": f"unknown op {op!r}"}
        except KeyError as exc:
            return {"ok": False, "error": f"not found: {exc.args[0]}"}
        except (HistorianError, TypeError, ValueError, sqlite3.Error) as exc:
            return {"ok": False, "error": str(exc)}


class HistorianClient:
    """Blocking client; raises ConnectionError while the historian is down."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 timeout_s: float = 5.0):
        self.host = host
        self.port = port
        self.timeout_s = timeout_s
        self._fh = None
        self._sock = None
        self._lock = threading.Lock()

    def _ensure(self):
        if self._fh is None:
            self._sock = socket.create_connection((self.host, self.port),
                                                  timeout=self.timeout_s)
            self._fh = self._sock.makefile("rwb")

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                except OSError:
                    pass
            self._sock = None
            self._fh = None

    def call(self, **req) -> dict:
        with self._lock:
            try:
                self._ensure()
                self._fh.write(json.dumps(req).encode() + b"\n")
                self._fh.flush()
                line = self._fh.readline()
            except OSError as exc:
                self._drop()
                raise ConnectionError(f"historian unreachable: {exc}") from exc
            if not line:
                self._drop()
                raise ConnectionError("historian closed the connection")
            return json.loads(line)

    def _drop(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        self._fh = None

    # convenience wrappers -------------------------------------------------

    def append(self, batch: list[TagSample]) -> dict[str, int]:
        resp = self.call(op="append", batch=[sample_to_json(s) for s in batch])
        if not resp.get("ok"):
            raise HistorianError(resp.get("error", "append failed"))
        return resp["acks"]

    def acks(self) -> dict[str, int]:
        resp = self.call(op="acks")
        if not resp.get("ok"):
            raise HistorianError(resp.get("error", "acks failed"))
        return resp["acks"]

    def query(self, tag: str, t0: float, t1: float, aggregate: str = "raw"):
        resp = self.call(op="query", tag=tag, t0=t0, t1=t1, aggregate=aggregate)
        if not resp.get("ok"):
            raise HistorianError(resp.get("error", "query failed"))
        if aggregate == "raw":
            return [sample_from_json(s) for s in resp["samples"]]
        if aggregate == "last":
            return None if resp["sample"] is None else sample_from_json(resp["sample"])
        return resp["value"]
