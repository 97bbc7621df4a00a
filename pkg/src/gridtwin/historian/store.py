"""Append-only tag-sample store on SQLite.

Samples arrive in per-tag sequence order and are durable before the append
call returns.  Sequence numbers are gapless per tag: duplicates of already
persisted rows are ignored (idempotent replay), anything that would create a
gap or reorder history is rejected naming the offending tag.
"""

from __future__ import annotations

import csv
import sqlite3
import threading
import time
from dataclasses import dataclass

VALUE_TYPES = ("bool", "f64", "i64", "utf8")

AGGREGATES = ("raw", "min", "max", "mean", "last")


class HistorianError(ValueError):
    pass


@dataclass(frozen=True)
class TagSample:
    tag: str
    seq: int
    value: bool | float | int | str
    quality: str
    scada_ts: float
    persist_ts: float = 0.0


def encode_value(value) -> tuple[str, str]:
    """Text encoding used on the bus: booleans "0"/"1", floats via repr."""
    if isinstance(value, bool):
        return "bool", "1" if value else "0"
    if isinstance(value, float):
        return "f64", repr(value)
    if isinstance(value, int):
        return "i64", str(value)
    if isinstance(value, str):
        return "utf8", value
    raise HistorianError(f"unsupported sample value type {type(value).__name__}")


def decode_value(vtype: str, text: str):
    if vtype == "bool":
        return text == "1"
    if vtype == "f64":
        return float(text)
    if vtype == "i64":
        return int(text)
    if vtype == "utf8":
        return text
    raise HistorianError(f"unknown value type tag {vtype!r}")


class HistorianStore:
    """Single-writer, many-reader store; one SQLite file."""

    def __init__(self, path: str = ":memory:"):
        self.path = str(path)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        if self.path != ":memory:":
            self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute(
            """CREATE TABLE IF NOT EXISTS samples (
                   tag TEXT NOT NULL,
                   seq INTEGER NOT NULL,
                   vtype TEXT NOT NULL,
                   value TEXT NOT NULL,
                   quality TEXT NOT NULL,
                   scada_ts REAL NOT NULL,
                   persist_ts REAL NOT NULL,
                   PRIMARY KEY (tag, seq)
               )""")
        self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # ------------------------------------------------------------------
    # writes
    # ------------------------------------------------------------------

    def max_seq(self, tag: str) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT MAX(seq) FROM samples WHERE tag = ?", (tag,)).fetchone()
        return row[0] or 0

    def acks(self) -> dict[str, int]:
        """Highest persisted seq per tag."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT tag, MAX(seq) FROM samples GROUP BY tag").fetchall()
        return {tag: seq for tag, seq in rows}

    def append(self, batch: list[TagSample]) -> dict[str, int]:
        """Persist a batch; returns highest seq per touched tag.

        Duplicates of rows already persisted are acknowledged without a
        second insert; a seq that skips ahead or falls behind the gapless
        chain rejects the whole batch before anything is written.
        """
        per_tag: dict[str, list[TagSample]] = {}
        for sample in batch:
            if sample.seq < 1:
                raise HistorianError(f"seq must be >= 1 for tag {sample.tag!r}")
            per_tag.setdefault(sample.tag, []).append(sample)

        with self._lock:
            for tag, samples in per_tag.items():
                seqs = [s.seq for s in samples]
                if seqs != sorted(seqs) or len(set(seqs)) != len(seqs):
                    raise HistorianError(f"batch not in seq order for tag {tag!r}")
                row = self._conn.execute(
                    "SELECT MAX(seq) FROM samples WHERE tag = ?", (tag,)).fetchone()
                have = row[0] or 0
                fresh = [s for s in samples if s.seq > have]
                if fresh and fresh[0].seq != have + 1:
                    raise HistorianError(
                        f"seq gap for tag {tag!r}: have {have}, batch starts at "
                        f"{fresh[0].seq}")
                for prev, cur in zip(fresh, fresh[1:]):
                    if cur.seq != prev.seq + 1:
                        raise HistorianError(
                            f"seq gap for tag {tag!r}: {prev.seq} -> {cur.seq}")

            now = time.time()
            acks: dict[str, int] = {}
            for tag, samples in per_tag.items():
                for s in samples:
                    vtype, text = encode_value(s.value)
                    self._conn.execute(
                        "INSERT OR IGNORE INTO samples VALUES (?,?,?,?,?,?,?)",
                        (tag, s.seq, vtype, text, s.quality, s.scada_ts, now))
                row = self._conn.execute(
                    "SELECT MAX(seq) FROM samples WHERE tag = ?", (tag,)).fetchone()
                acks[tag] = row[0]
            self._conn.commit()  # durable before the ack leaves
        return acks

    # ------------------------------------------------------------------
    # reads
    # ------------------------------------------------------------------

    def tags(self) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT DISTINCT tag FROM samples ORDER BY tag").fetchall()
        return [r[0] for r in rows]

    def count(self, tag: str | None = None) -> int:
        with self._lock:
            if tag is None:
                return self._conn.execute("SELECT COUNT(*) FROM samples").fetchone()[0]
            return self._conn.execute(
                "SELECT COUNT(*) FROM samples WHERE tag = ?", (tag,)).fetchone()[0]

    def _known(self, tag: str) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM samples WHERE tag = ? LIMIT 1", (tag,)).fetchone()
        return row is not None

    def query(self, tag: str, t0: float, t1: float, aggregate: str = "raw"):
        """Samples with scada_ts in [t0, t1], or a scalar aggregate of them."""
        if t0 > t1:
            raise HistorianError(f"empty interval: t0 {t0} > t1 {t1}")
        if aggregate not in AGGREGATES:
            raise HistorianError(f"unknown aggregate {aggregate!r}")
        if not self._known(tag):
            raise KeyError(f"unknown tag {tag!r}")
        with self._lock:
            rows = self._conn.execute(
                "SELECT tag, seq, vtype, value, quality, scada_ts, persist_ts "
                "FROM samples WHERE tag = ? AND scada_ts >= ? AND scada_ts <= ? "
                "ORDER BY seq", (tag, t0, t1)).fetchall()
        samples = [TagSample(tag=r[0], seq=r[1], value=decode_value(r[2], r[3]),
                             quality=r[4], scada_ts=r[5], persist_ts=r[6])
                   for r in rows]
        if aggregate == "raw":
            return samples
        if not samples:
            return None
        if aggregate == "last":
            return samples[-1]
        values = [float(s.value) for s in samples]
        if aggregate == "min":
            return min(values)
        if aggregate == "max":
            return max(values)
        return sum(values) / len(values)

    # ------------------------------------------------------------------
    # export
    # ------------------------------------------------------------------

    def export_csv(self, path: str) -> int:
        """Dump every sample as CSV; returns row count."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT tag, seq, scada_ts, value, quality FROM samples "
                "ORDER BY tag, seq").fetchall()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tag", "seq", "scada_ts", "value", "quality"])
            for row in rows:
                writer.writerow(row)
        return len(rows)
