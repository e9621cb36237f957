"""Deterministic single-threaded event loop driving the virtual-clock mode.

Events fire in (timestamp, actor order, schedule sequence) order, so identical
seeds and configs replay identically. Time advances event-to-event; a 300 s
scenario runs in well under a second of wall time at desk scale.
"""

from __future__ import annotations

import heapq
from typing import Callable

GATEWAY_ORDER = -1  # admission decisions sort before client actions at the same instant


class EventLoop:
    def __init__(self) -> None:
        self.now = 0.0
        self._heap: list[tuple[float, int, int, Callable[[], None]]] = []
        self._seq = 0

    def call_at(self, when: float, order: int, fn: Callable[[], None]) -> None:
        if when < self.now:
            raise ValueError(f"cannot schedule at {when} before now={self.now}")
        self._seq += 1
        heapq.heappush(self._heap, (when, order, self._seq, fn))

    def run(self, until: float | None = None) -> None:
        while self._heap:
            when, _, _, fn = self._heap[0]
            if until is not None and when > until:
                break
            heapq.heappop(self._heap)
            self.now = when
            fn()

    def pending(self) -> int:
        return len(self._heap)
