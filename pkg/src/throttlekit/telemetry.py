"""Telemetry side channel: clients report windowed counts, a UDP server answers
with network-wide congestion snapshots.

The server keeps the latest report per client inside a staleness horizon and
is strictly request/response: every inbound report datagram is answered with
one snapshot datagram, nothing is pushed. Wire format is one JSON object per
datagram (<= 512 bytes):

    report    {"v": 1, "id": str, "win_req": int, "got_429": int, "ts": float}
    snapshot  {"v": 1, "active": int, "total_req": int, "rep_429": int,
               "limiter_rate": float}          # limiter_rate only when set

Telemetry traffic never touches the gateway's token bucket and losing a
datagram is fine: clients fall back to local behaviour on a missing snapshot.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
from dataclasses import dataclass

log = logging.getLogger(__name__)

WIRE_VERSION = 1
MAX_DATAGRAM = 512


@dataclass(frozen=True)
class TelemetryReport:
    client_id: str
    window_requests: int
    got_429: int
    sent_at: float

    def __post_init__(self) -> None:
        if not 0 <= self.got_429 <= self.window_requests:
            raise ValueError("need window_requests >= got_429 >= 0")


@dataclass(frozen=True)
class TelemetrySnapshot:
    active_clients: int
    total_requests: int
    reported_429: int
    limiter_rate: float | None = None  # tokens per minute


class TelemetryChannel:
    """One round trip: send a report, receive the answering snapshot (or None)."""

    def exchange(self, report: TelemetryReport) -> TelemetrySnapshot | None:
        raise NotImplementedError


def encode_report(report: TelemetryReport) -> bytes:
    data = json.dumps(
        {
            "v": WIRE_VERSION,
            "id": report.client_id,
            "win_req": report.window_requests,
            "got_429": report.got_429,
            "ts": report.sent_at,
        },
        separators=(",", ":"),
    ).encode()
    if len(data) > MAX_DATAGRAM:
        raise ValueError("report exceeds datagram budget")
    return data


def decode_report(data: bytes) -> TelemetryReport:
    obj = json.loads(data.decode())
    if obj.get("v") != WIRE_VERSION:
        raise ValueError(f"unsupported wire version {obj.get('v')!r}")
    return TelemetryReport(
        client_id=str(obj["id"]),
        window_requests=int(obj["win_req"]),
        got_429=int(obj["got_429"]),
        sent_at=float(obj["ts"]),
    )


def encode_snapshot(snapshot: TelemetrySnapshot) -> bytes:
    obj = {
        "v": WIRE_VERSION,
        "active": snapshot.active_clients,
        "total_req": snapshot.total_requests,
        "rep_429": snapshot.reported_429,
    }
    if snapshot.limiter_rate is not None:
        obj["limiter_rate"] = snapshot.limiter_rate
    return json.dumps(obj, separators=(",", ":")).encode()


def decode_snapshot(data: bytes) -> TelemetrySnapshot:
    obj = json.loads(data.decode())
    if obj.get("v") != WIRE_VERSION:
        raise ValueError(f"unsupported wire version {obj.get('v')!r}")
    rate = obj.get("limiter_rate")
    return TelemetrySnapshot(
        active_clients=int(obj["active"]),
        total_requests=int(obj["total_req"]),
        reported_429=int(obj["rep_429"]),
        limiter_rate=None if rate is None else float(rate),
    )


class Aggregator:
    """Latest-report-per-client store with a staleness horizon.

    A client counts toward the snapshot only through its most recent report,
    and only while that report is younger than ``horizon`` seconds. A client
    is flagged congested when its latest report carries got_429 > 0.
    """

    def __init__(
        self,
        horizon: float = 60.0,
        limiter_rate_pm: float | None = None,
        skew_tolerance: float = 2.0,
    ) -> None:
        self.horizon = horizon
        self.limiter_rate_pm = limiter_rate_pm
        self.skew_tolerance = skew_tolerance
        self._reports: dict[str, tuple[float, TelemetryReport]] = {}

    def _prune(self, now: float) -> None:
        cutoff = now - self.horizon
        stale = [cid for cid, (seen, _) in self._reports.items() if seen <= cutoff]
        for cid in stale:
            del self._reports[cid]

    def aggregate(self, report: TelemetryReport, now: float) -> bool:
        """Record ``report``; returns False when it is dropped for clock skew."""
        if report.sent_at > now + self.skew_tolerance:
            return False
        self._reports[report.client_id] = (now, report)
        self._prune(now)
        return True

    def snapshot(self, now: float) -> TelemetrySnapshot:
        self._prune(now)
        reports = [r for _, r in self._reports.values()]
        return TelemetrySnapshot(
            active_clients=len(reports),
            total_requests=sum(r.window_requests for r in reports),
            reported_429=sum(1 for r in reports if r.got_429 > 0),
            limiter_rate=self.limiter_rate_pm,
        )


class EmbeddedChannel(TelemetryChannel):
    """In-process channel used by the virtual-clock emulator: zero latency,
    never lossy, serialized by the single-threaded event loop."""

    def __init__(self, aggregator: Aggregator, clock) -> None:
        self.aggregator = aggregator
        self._clock = clock

    def exchange(self, report: TelemetryReport) -> TelemetrySnapshot | None:
        now = self._clock()
        self.aggregator.aggregate(report, now)
        return self.aggregator.snapshot(now)


class UdpChannel(TelemetryChannel):
    """Client side of the UDP protocol; a lost response yields None."""

    def __init__(self, address: tuple[str, int], timeout: float = 0.5) -> None:
        self.address = address
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.settimeout(timeout)

    def exchange(self, report: TelemetryReport) -> TelemetrySnapshot | None:
        try:
            self._sock.sendto(encode_report(report), self.address)
            data, _ = self._sock.recvfrom(MAX_DATAGRAM)
            return decode_snapshot(data)
        except (OSError, ValueError, KeyError):
            return None

    def close(self) -> None:
        self._sock.close()


class TelemetryServer:
    """UDP server answering every report with one snapshot.

    Datagram handling runs on a single thread, so aggregation and snapshot
    reads are naturally serialized. Malformed datagrams are dropped silently;
    failed responses are logged and ignored.
    """

    def __init__(
        self,
        listen: tuple[str, int] = ("127.0.0.1", 0),
        aggregator: Aggregator | None = None,
        clock=None,
    ) -> None:
        self.aggregator = aggregator if aggregator is not None else Aggregator()
        self._clock = clock if clock is not None else time.monotonic
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(listen)
        self._sock.settimeout(0.1)
        self.address: tuple[str, int] = self._sock.getsockname()[:2]
        self._running = False
        self._thread: threading.Thread | None = None

    def _serve(self) -> None:
        while self._running:
            try:
                data, addr = self._sock.recvfrom(MAX_DATAGRAM)
            except socket.timeout:
                continue
            except OSError:
                break
            now = self._clock()
            try:
                report = decode_report(data)
            except (ValueError, KeyError, UnicodeDecodeError, json.JSONDecodeError):
                continue
            self.aggregator.aggregate(report, now)
            try:
                self._sock.sendto(encode_snapshot(self.aggregator.snapshot(now)), addr)
            except OSError as exc:
                log.warning("telemetry response to %s failed: %s", addr, exc)

    def start(self) -> "TelemetryServer":
        self._running = True
        self._thread = threading.Thread(target=self._serve, name="telemetry", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._running = False
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
        self._sock.close()

    def serve_forever(self) -> None:
        """Blocking variant for the CLI; runs until interrupted."""
        self._running = True
        try:
            self._serve()
        except KeyboardInterrupt:
            pass
        finally:
            self._sock.close()
