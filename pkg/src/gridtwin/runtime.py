"""Event engine shared by every twin component.

One scheduler drives simulator ticks, poll cycles, protocol timers and
experiment steps.  Two modes:

- ``real``: a loop thread fires events against the wall clock (with a short
  spin window so millisecond-scale timers, e.g. event-burst retransmission,
  land close to their deadline).
- ``fast``: virtual time; ``run_until`` executes events in (timestamp, seq)
  order with no sleeping.  Same inputs produce the same execution order,
  which is what makes fast-mode runs reproducible.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
import time
from typing import Any, Callable

logger = logging.getLogger(__name__)

# Real mode: busy-wait this close to a deadline instead of sleeping.
_SPIN_WINDOW_MS = 1.5
_MAX_IDLE_S = 0.2


class TimerHandle:
    """Cancellable scheduled callback."""

    __slots__ = ("ts_ms", "seq", "fn", "args", "cancelled")

    def __init__(self, ts_ms: float, seq: int, fn: Callable, args: tuple):
        self.ts_ms = ts_ms
        self.seq = seq
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "TimerHandle") -> bool:
        return (self.ts_ms, self.seq) < (other.ts_ms, other.seq)


class Engine:
    """Single-threaded event executor with real and fast clock modes.

    All component logic runs on the engine thread (real mode) or on the
    caller of ``run_until`` (fast mode), so per-component state needs no
    locking as long as it is only touched from scheduled callbacks.
    """

    def __init__(self, mode: str = "real", start_ms: float = 0.0):
        if mode not in ("real", "fast"):
            raise ValueError(f"unknown engine mode {mode!r}")
        self.mode = mode
        self._start_ms = float(start_ms)
        self._virtual_now = float(start_ms)
        self._wall_t0: float | None = None
        self._heap: list[TimerHandle] = []
        self._seq = itertools.count()
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._running = False
        self._thread: threading.Thread | None = None

    # ------------------------------------------------------------------
    # Clock
    # ------------------------------------------------------------------

    @property
    def is_fast(self) -> bool:
        return self.mode == "fast"

    def now_ms(self) -> float:
        if self.mode == "fast":
            return self._virtual_now
        if self._wall_t0 is None:
            return self._start_ms
        return self._start_ms + (time.monotonic() - self._wall_t0) * 1000.0

    # ------------------------------------------------------------------
    # Scheduling (thread-safe)
    # ------------------------------------------------------------------

    def call_at(self, ts_ms: float, fn: Callable, *args: Any) -> TimerHandle:
        with self._cond:
            h = TimerHandle(float(ts_ms), next(self._seq), fn, args)
            heapq.heappush(self._heap, h)
            self._cond.notify()
        return h

    def call_after(self, delay_ms: float, fn: Callable, *args: Any) -> TimerHandle:
        return self.call_at(self.now_ms() + max(0.0, delay_ms), fn, *args)

    def call_soon(self, fn: Callable, *args: Any) -> TimerHandle:
        return self.call_at(self.now_ms(), fn, *args)

    # ------------------------------------------------------------------
    # Real mode loop
    # ------------------------------------------------------------------

    def start(self) -> None:
        """Start the wall-clock loop thread (no-op in fast mode)."""
        if self.mode == "fast":
            return
        with self._cond:
            if self._running:
                return
            self._running = True
            self._wall_t0 = time.monotonic()
        self._thread = threading.Thread(target=self._loop, name="twin-engine", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        with self._cond:
            self._running = False
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def _loop(self) -> None:
        while True:
            handle = None
            with self._cond:
                while True:
                    if not self._running:
                        return
                    while self._heap and self._heap[0].cancelled:
                        heapq.heappop(self._heap)
                    if not self._heap:
                        self._cond.wait(_MAX_IDLE_S)
                        continue
                    wait_ms = self._heap[0].ts_ms - self.now_ms()
                    if wait_ms <= _SPIN_WINDOW_MS:
                        handle = heapq.heappop(self._heap)
                        break
                    self._cond.wait(min((wait_ms - _SPIN_WINDOW_MS / 2) / 1000.0, _MAX_IDLE_S))
            # Spin out the last stretch so short timers fire on time.
            while self.now_ms() < handle.ts_ms:
                pass
            self._execute(handle)

    # ------------------------------------------------------------------
    # Fast mode driver
    # ------------------------------------------------------------------

    def run_until(self, ts_ms: float) -> None:
        """Execute every event due at or before ``ts_ms`` (fast mode only)."""
        if self.mode != "fast":
            raise RuntimeError("run_until is only valid in fast mode")
        target = float(ts_ms)
        while True:
            with self._lock:
                while self._heap and self._heap[0].cancelled:
                    heapq.heappop(self._heap)
                if not self._heap or self._heap[0].ts_ms > target:
                    break
                handle = heapq.heappop(self._heap)
            self._virtual_now = max(self._virtual_now, handle.ts_ms)
            self._execute(handle)
        self._virtual_now = max(self._virtual_now, target)

    def run_for(self, duration_ms: float) -> None:
        self.run_until(self.now_ms() + duration_ms)

    # ------------------------------------------------------------------

    def _execute(self, handle: TimerHandle) -> None:
        if handle.cancelled:
            return
        try:
            handle.fn(*handle.args)
        except Exception:
            logger.exception("engine callback %r failed", handle.fn)
