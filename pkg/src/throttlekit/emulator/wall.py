"""Wall-clock executor: the same strategy code driven over real HTTP and UDP.

Scenario time maps onto the wall via ``scenario = (monotonic - t0) * scale``,
so ``time_scale 10`` compresses a 300 s scenario into roughly 30 s; the
embedded gateway and telemetry server share the scenario clock, which keeps
token refill and report windows consistent without touching any rates.
Each client runs in its own thread with a keep-alive HTTP connection and (for
AATB) a private UDP socket. Transport failures are retried a few times; a run
that still fails is re-executed with a fresh derived seed and the reseed count
is recorded.
"""

from __future__ import annotations

import http.client
import json
import logging
import socket
import threading
import time
from collections import deque
from urllib.parse import urlparse

from ..gateway import GatewayServer
from ..profiles import make_strategy
from ..telemetry import TelemetryServer, UdpChannel
from ..workload import Request, TraceDataset
from .client import RequestRecord
from .metrics import RunMetrics, compute_run_metrics

log = logging.getLogger(__name__)

_TRANSPORT_RETRIES = 3
_MAX_RESEEDS = 3


class TransportError(RuntimeError):
    """Non-HTTP failure (connect/reset/timeout) that survived its retries."""


class ScenarioClock:
    def __init__(self, scale: float) -> None:
        self.scale = scale
        self._t0 = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._t0) * self.scale

    def sleep_until(self, target: float) -> None:
        while True:
            remaining = target - self.now()
            if remaining <= 0:
                return
            time.sleep(min(remaining / self.scale, 0.05))


class _WallClient(threading.Thread):
    def __init__(
        self,
        client_id: str,
        requests: list[Request],
        strategy,
        clock: ScenarioClock,
        http_addr: tuple[str, int],
        offset: float,
    ) -> None:
        super().__init__(name=f"client-{client_id}", daemon=True)
        self.client_id = client_id
        self.requests = sorted(requests, key=lambda r: r.seq)
        self.strategy = strategy
        self.clock = clock
        self.http_addr = http_addr
        self.offset = offset
        self.records: dict[int, RequestRecord] = {
            r.seq: RequestRecord(client_id, r.seq, r.arrival_time + offset)
            for r in self.requests
        }
        self.error: Exception | None = None

    def _post(self, conn: http.client.HTTPConnection, payload: tuple[int, int]) -> int:
        body = json.dumps({"a": payload[0], "b": payload[1]}).encode()
        last: Exception | None = None
        for attempt in range(_TRANSPORT_RETRIES):
            try:
                conn.request("POST", "/multiply", body, {"Content-Type": "application/json"})
                resp = conn.getresponse()
                resp.read()
                return resp.status
            except (http.client.HTTPException, OSError) as exc:
                last = exc
                conn.close()
                time.sleep(0.05 * (attempt + 1))
        raise TransportError(f"{self.client_id}: POST /multiply failed: {last}")

    def run(self) -> None:
        try:
            self._run()
        except Exception as exc:  # propagated to the runner after join
            self.error = exc

    def _run(self) -> None:
        conn = http.client.HTTPConnection(*self.http_addr, timeout=10)
        pending = deque(self.requests)
        queue: deque[Request] = deque()
        served = 0
        omega = self.strategy.report_interval
        start = self.requests[0].arrival_time + self.offset if self.requests else 0.0
        next_tick = start + omega if omega is not None else float("inf")
        try:
            while served < len(self.requests):
                now = self.clock.now()
                while pending and pending[0].arrival_time + self.offset <= now:
                    queue.append(pending.popleft())
                if now >= next_tick:
                    self.strategy.on_tick(now)
                    next_tick += omega
                    continue
                wait_for = float("inf")
                if queue:
                    ready = self.strategy.acquire(now)
                    if ready <= now:
                        req = queue[0]
                        rec = self.records[req.seq]
                        if rec.first_send is None:
                            rec.first_send = now
                        rec.attempts += 1
                        status = self._post(conn, req.payload)
                        after = self.clock.now()
                        if status == 200:
                            rec.served = after
                            served += 1
                            queue.popleft()
                            self.strategy.on_success(after)
                        elif status == 429:
                            rec.rejects += 1
                            self.strategy.on_reject(after)
                        else:
                            raise TransportError(
                                f"{self.client_id}: unexpected status {status}"
                            )
                        continue
                    wait_for = ready
                if pending:
                    wait_for = min(wait_for, pending[0].arrival_time + self.offset)
                wait_for = min(wait_for, next_tick)
                self.clock.sleep_until(min(wait_for, now + 5.0))
        finally:
            conn.close()
            channel = getattr(self.strategy, "channel", None)
            if isinstance(channel, UdpChannel):
                channel.close()


def _parse_endpoint(value: str, default_port: int) -> tuple[str, int]:
    if "//" in value:
        parsed = urlparse(value)
        return parsed.hostname or "127.0.0.1", parsed.port or default_port
    host, _, port = value.partition(":")
    return host or "127.0.0.1", int(port) if port else default_port


def _check_reachable(addr: tuple[str, int], what: str) -> None:
    try:
        with socket.create_connection(addr, timeout=2.0):
            pass
    except OSError as exc:
        raise RuntimeError(f"{what} at {addr[0]}:{addr[1]} unreachable: {exc}") from exc


def _external_reset(addr: tuple[str, int]) -> None:
    conn = http.client.HTTPConnection(*addr, timeout=5)
    try:
        conn.request("POST", "/reset", b"")
        resp = conn.getresponse()
        resp.read()
        if resp.status != 200:
            raise RuntimeError(
                f"external gateway refused /reset (status {resp.status}); "
                "multi-run experiments need the admin endpoints enabled"
            )
    finally:
        conn.close()


def _external_stats(addr: tuple[str, int]) -> dict | None:
    conn = http.client.HTTPConnection(*addr, timeout=5)
    try:
        conn.request("GET", "/stats")
        resp = conn.getresponse()
        data = resp.read()
        if resp.status != 200:
            return None
        return json.loads(data)
    except (OSError, ValueError, http.client.HTTPException):
        return None
    finally:
        conn.close()


def run_wall_once(config, dataset: TraceDataset, run_index: int, seed_salt: int) -> RunMetrics:
    from .runner import client_rng  # local import to avoid a cycle

    gw_cfg = config.gateway_config()
    external = config.gateway_url is not None
    clock = ScenarioClock(config.time_scale)

    gateway = None
    telemetry = None
    try:
        if external:
            http_addr = _parse_endpoint(config.gateway_url, 8080)
            _check_reachable(http_addr, "gateway")
            _external_reset(http_addr)
        else:
            gateway = GatewayServer(gw_cfg, clock=clock.now).start()
            http_addr = gateway.address

        telemetry_addr = None
        if config.strategy == "aatb":
            if config.telemetry_addr is not None:
                telemetry_addr = _parse_endpoint(config.telemetry_addr, 9090)
            else:
                from ..telemetry import Aggregator

                telemetry = TelemetryServer(
                    aggregator=Aggregator(
                        horizon=2.0 * config.omega(),
                        limiter_rate_pm=(
                            gw_cfg.rate_per_min if config.limiter_rate_in_snapshots else None
                        ),
                    ),
                    clock=clock.now,
                ).start()
                telemetry_addr = telemetry.address

        profile = config.strategy_profile()
        offset_max = config.effective_offset_max()
        workers: list[_WallClient] = []
        for cid, reqs in sorted(dataset.by_client().items()):
            rng = client_rng(config.seed, seed_salt, cid)
            offset = float(rng.uniform(0.0, offset_max)) if offset_max > 0 else 0.0
            channel = UdpChannel(telemetry_addr) if telemetry_addr is not None else None
            strategy = make_strategy(
                config.strategy,
                profile,
                rng,
                client_id=cid,
                channel=channel,
                limiter_rate_pm=gw_cfg.rate_per_min,
                start_time=reqs[0].arrival_time + offset,
                overrides=config.strategy_params,
            )
            workers.append(_WallClient(cid, reqs, strategy, clock, http_addr, offset))

        for w in workers:
            w.start()
        for w in workers:
            w.join()
        failures = [w.error for w in workers if w.error is not None]
        if failures:
            raise TransportError(f"{len(failures)} client(s) failed; first: {failures[0]}")

        records = [rec for w in workers for rec in w.records.values()]
        total_429 = sum(r.rejects for r in records)
        if external:
            stats = _external_stats(http_addr)
            admitted = stats["admitted"] if stats else len(records)
            rejected = stats["rejected"] if stats else total_429
        else:
            admitted = gateway.core.stats.admitted
            rejected = gateway.core.stats.rejected
            if total_429 != rejected or len(records) != admitted:
                raise RuntimeError(
                    "ledger mismatch: clients saw "
                    f"({len(records)}, {total_429}), gateway ({admitted}, {rejected})"
                )
        return compute_run_metrics(
            run_index=run_index,
            records=records,
            update_messages=sum(w.strategy.update_messages for w in workers),
            congestion_messages=sum(w.strategy.congestion_messages for w in workers),
            gateway_admitted=admitted,
            gateway_rejected=rejected,
        )
    finally:
        if telemetry is not None:
            telemetry.stop()
        if gateway is not None:
            gateway.stop()


def run_wall_experiment(config, dataset: TraceDataset) -> list[RunMetrics]:
    if config.gateway_url is not None:
        _check_reachable(_parse_endpoint(config.gateway_url, 8080), "gateway")
    runs: list[RunMetrics] = []
    for run_index in range(config.runs):
        reseeds = 0
        while True:
            # reseeded retries draw from a disjoint salt range so they never
            # replay the failed run's streams
            salt = run_index if reseeds == 0 else 1_000_000 + run_index * _MAX_RESEEDS + reseeds
            try:
                metrics = run_wall_once(config, dataset, run_index, salt)
                metrics.reseeded = reseeds
                runs.append(metrics)
                break
            except TransportError as exc:
                reseeds += 1
                log.warning("run %d invalid (%s); reseeding (%d)", run_index, exc, reseeds)
                if reseeds > _MAX_RESEEDS:
                    raise
    return runs
