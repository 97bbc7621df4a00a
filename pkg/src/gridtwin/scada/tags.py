"""Live tag database for the supervisory engine.

Every roster data object maps to one tag named by its object path
(``"SPLC/CSWI_Q4_1.Oper"``).  Updates land atomically per device: a reader
snapshot never mixes readings from two different poll cycles of the same
device.  Each value or quality change is journalled with a per-tag
monotone sequence number (the contract the historian persists) and fanned
out to subscribed listeners (the gateway event stream).
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, replace
from typing import Callable, Iterable

from gridtwin.historian.store import TagSample

logger = logging.getLogger(__name__)

TAG_KINDS = ("measurement", "status", "control")


class ScadaError(ValueError):
    """Refused supervisory operation (bad tag, bad kind, bad credential)."""


@dataclass(frozen=True)
class Tag:
    """One point in the live database.

    ``source_ts`` is the device's timestamp for the value; ``scada_ts`` is
    when the supervisory engine recorded it.  ``scada_ts >= source_ts``
    always holds (both run on the twin clock, in milliseconds).
    """

    name: str
    kind: str            # measurement | status | control
    device: str
    zone: str
    value: object = None
    quality: str = "stale"
    source_ts: float = 0.0
    scada_ts: float = 0.0
    seq: int = 0         # change sequence, 1-based after first update

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "device": self.device,
            "zone": self.zone,
            "value": self.value,
            "quality": self.quality,
            "source_ts": self.source_ts,
            "scada_ts": self.scada_ts,
            "seq": self.seq,
        }


class TagDB:
    """Tag store with per-device atomic updates and a change journal.

    Writers (the poller) call :meth:`update_device`; readers take
    :meth:`snapshot`, which is a consistent cut under the same lock.  Tag
    objects are immutable, so a snapshot stays valid after release.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._tags: dict[str, Tag] = {}
        self._journal: list[TagSample] = []
        self._listeners: list[Callable[[list[Tag]], None]] = []

    # ------------------------------------------------------------------
    # declaration & reads
    # ------------------------------------------------------------------

    def declare(self, name: str, kind: str, device: str, zone: str) -> None:
        if kind not in TAG_KINDS:
            raise ScadaError(f"{name}: kind must be one of {TAG_KINDS}")
        with self._lock:
            if name in self._tags:
                raise ScadaError(f"duplicate tag {name}")
            self._tags[name] = Tag(name=name, kind=kind, device=device, zone=zone)

    def get(self, name: str) -> Tag:
        with self._lock:
            tag = self._tags.get(name)
        if tag is None:
            raise KeyError(f"unknown tag {name}")
        return tag

    def names(self) -> list[str]:
        with self._lock:
            return list(self._tags)

    def snapshot(self) -> dict[str, Tag]:
        """Consistent cut of the whole database."""
        with self._lock:
            return dict(self._tags)

    def __len__(self) -> int:
        with self._lock:
            return len(self._tags)

    # ------------------------------------------------------------------
    # writes
    # ------------------------------------------------------------------

    def update_device(
        self,
        device: str,
        readings: Iterable[tuple[str, object, str, float]],
        scada_ts: float,
    ) -> list[Tag]:
        """Apply one device's poll readings atomically.

        ``readings`` is ``(tag name, value, quality, source_ts)`` per object
        read.  Returns the tags whose value or quality changed (journalled
        and fanned out to listeners, in order).
        """
        changed: list[Tag] = []
        with self._lock:
            for name, value, quality, source_ts in readings:
                tag = self._tags.get(name)
                if tag is None:
                    raise KeyError(f"unknown tag {name}")
                if tag.device != device:
                    raise ScadaError(
                        f"{name} belongs to {tag.device}, not {device}")
                if tag.seq > 0 and tag.value == value and tag.quality == quality:
                    # unchanged: refresh timestamps only, no journal entry
                    self._tags[name] = replace(
                        tag, source_ts=min(source_ts, scada_ts), scada_ts=scada_ts)
                    continue
                tag = replace(
                    tag,
                    value=value,
                    quality=quality,
                    source_ts=min(source_ts, scada_ts),
                    scada_ts=scada_ts,
                    seq=tag.seq + 1,
                )
                self._tags[name] = tag
                changed.append(tag)
            for tag in changed:
                self._journal.append(TagSample(
                    tag=tag.name, seq=tag.seq, value=tag.value,
                    quality=tag.quality, scada_ts=tag.scada_ts))
        if changed:
            self._notify(changed)
        return changed

    def degrade_device(self, device: str, quality: str, scada_ts: float) -> list[Tag]:
        """Force every tag of an unresponsive device to the given quality."""
        changed: list[Tag] = []
        with self._lock:
            for name, tag in self._tags.items():
                if tag.device != device or tag.quality == quality:
                    continue
                tag = replace(tag, quality=quality, scada_ts=scada_ts,
                              seq=tag.seq + 1)
                self._tags[name] = tag
                changed.append(tag)
            for tag in changed:
                self._journal.append(TagSample(
                    tag=tag.name, seq=tag.seq, value=tag.value,
                    quality=tag.quality, scada_ts=tag.scada_ts))
        if changed:
            self._notify(changed)
        return changed

    # ------------------------------------------------------------------
    # change journal & listeners
    # ------------------------------------------------------------------

    def drain_journal(self) -> list[TagSample]:
        """Hand off all journalled changes exactly once, in change order."""
        with self._lock:
            out, self._journal = self._journal, []
        return out

    def journal_size(self) -> int:
        with self._lock:
            return len(self._journal)

    def subscribe(self, listener: Callable[[list[Tag]], None]) -> None:
        with self._lock:
            self._listeners.append(listener)

    def unsubscribe(self, listener: Callable[[list[Tag]], None]) -> None:
        with self._lock:
            if listener in self._listeners:
                self._listeners.remove(listener)

    def _notify(self, changed: list[Tag]) -> None:
        with self._lock:
            listeners = list(self._listeners)
        for listener in listeners:
            try:
                listener(changed)
            except Exception:  # a broken subscriber must not stall polling
                logger.exception("tag listener failed")
