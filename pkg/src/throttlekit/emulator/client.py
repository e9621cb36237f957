"""Client actor for the virtual-clock emulator.

Each actor owns one strategy instance and replays one client's trace: requests
queue FIFO, at most one is in flight, successes advance the queue, 429s feed
the strategy and the head request is retried. The actor re-asks the strategy
for an earliest-send time after every state-changing event, so rate changes
made mid-wait (telemetry updates) take effect immediately; stale wakeups are
invalidated by a generation counter.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

from ..strategies import RetryStrategy
from ..workload import Request
from .engine import EventLoop, GATEWAY_ORDER


@dataclass
class RequestRecord:
    client_id: str
    seq: int
    arrival: float
    first_send: float | None = None
    served: float | None = None
    attempts: int = 0
    rejects: int = 0


class VirtualGatewayLink:
    """Zero-jitter loopback transport with a configurable round-trip time."""

    def __init__(self, loop: EventLoop, core, rtt: float) -> None:
        self.loop = loop
        self.core = core
        self.rtt = rtt

    def send(self, payload: tuple[int, int], reply_order: int, on_response) -> None:
        body = json.dumps({"a": payload[0], "b": payload[1]}).encode()

        def deliver() -> None:
            status, _ = self.core.handle_multiply(body, self.loop.now)
            self.loop.call_at(self.loop.now + self.rtt / 2.0, reply_order, lambda: on_response(status))

        self.loop.call_at(self.loop.now + self.rtt / 2.0, GATEWAY_ORDER, deliver)


class ClientActor:
    def __init__(
        self,
        client_id: str,
        requests: list[Request],
        strategy: RetryStrategy,
        loop: EventLoop,
        order: int,
        link: VirtualGatewayLink,
        arrival_offset: float = 0.0,
    ) -> None:
        self.client_id = client_id
        self.requests = sorted(requests, key=lambda r: r.seq)
        self.strategy = strategy
        self.loop = loop
        self.order = order
        self.link = link
        self.offset = arrival_offset
        self.queue: deque[Request] = deque()
        self.records: dict[int, RequestRecord] = {}
        self.in_flight: Request | None = None
        self.served_count = 0
        self._gen = 0

    @property
    def start_time(self) -> float:
        return self.requests[0].arrival_time + self.offset if self.requests else 0.0

    @property
    def done(self) -> bool:
        return self.served_count == len(self.requests)

    def start(self) -> None:
        for req in self.requests:
            arrival = req.arrival_time + self.offset
            self.records[req.seq] = RequestRecord(self.client_id, req.seq, arrival)
            self.loop.call_at(arrival, self.order, lambda r=req: self._arrive(r))
        if self.strategy.report_interval is not None and self.requests:
            self.loop.call_at(
                self.start_time + self.strategy.report_interval, self.order, self._tick
            )

    # -- internals -----------------------------------------------------

    def _arrive(self, req: Request) -> None:
        self.queue.append(req)
        self._kick()

    def _kick(self) -> None:
        if self.in_flight is not None or not self.queue:
            return
        now = self.loop.now
        ready = self.strategy.acquire(now)
        if ready <= now:
            self._send(self.queue[0])
            return
        self._gen += 1
        gen = self._gen
        self.loop.call_at(ready, self.order, lambda: self._wake(gen))

    def _wake(self, gen: int) -> None:
        if gen != self._gen:
            return
        self._kick()

    def _reschedule(self) -> None:
        """Invalidate any pending wake and re-derive the next send time."""
        self._gen += 1
        self._kick()

    def _send(self, req: Request) -> None:
        now = self.loop.now
        rec = self.records[req.seq]
        if rec.first_send is None:
            rec.first_send = now
        rec.attempts += 1
        self.in_flight = req
        self.link.send(req.payload, self.order, lambda status, r=req: self._on_response(r, status))

    def _on_response(self, req: Request, status: int) -> None:
        now = self.loop.now
        self.in_flight = None
        rec = self.records[req.seq]
        if status == 200:
            rec.served = now
            self.served_count += 1
            self.queue.popleft()
            self.strategy.on_success(now)
            self._kick()
        elif status == 429:
            rec.rejects += 1
            self.strategy.on_reject(now)
            self._reschedule()
        else:
            raise RuntimeError(f"unexpected status {status} from embedded gateway")

    def _tick(self) -> None:
        if self.done:
            return
        self.strategy.on_tick(self.loop.now)
        assert self.strategy.report_interval is not None
        self.loop.call_at(self.loop.now + self.strategy.report_interval, self.order, self._tick)
        # telemetry may have moved the rate or the acquire gate
        if self.in_flight is None and self.queue:
            self._reschedule()
