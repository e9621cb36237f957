"""Token-bucket-gated HTTP service: a multiply endpoint behind an admission gate.

``GatewayCore`` is transport-free (callers supply timestamps) so the same
admission logic backs both the real HTTP server and the in-process virtual
emulation. Admission is a single serialized check-and-decrement, so the token
ledger stays exact under concurrent load.

Wire surface:
    POST /multiply   body {"a": int, "b": int} -> 200 {"result": int}
                     quota exhausted           -> 429, empty body, no
                     Retry-After / RateLimit-* headers
                     malformed body            -> 400 (bypasses the bucket)
    GET  /stats      admission counters as JSON   (admin, flag-disabled)
    POST /reset      restore initial tokens, clear counters (admin)
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .bucket import TokenBucket, per_minute_to_per_second

log = logging.getLogger(__name__)


@dataclass
class GatewayConfig:
    capacity: float = 100.0
    rate_per_min: float = 80.0
    listen: tuple[str, int] = ("127.0.0.1", 0)
    initial_tokens: float | None = None  # None -> capacity
    admin_endpoints: bool = True  # /stats and /reset; disable for fidelity runs
    backlog: int = 2048
    keepalive_timeout: float = 350.0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.rate_per_min <= 0:
            raise ValueError("rate_per_min must be > 0")
        if self.initial_tokens is None:
            self.initial_tokens = float(self.capacity)


@dataclass
class GatewayStats:
    admitted: int = 0
    rejected: int = 0
    malformed: int = 0
    log: list[tuple[float, str]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "admitted": self.admitted,
            "rejected": self.rejected,
            "malformed": self.malformed,
            "log": [[t, outcome] for t, outcome in self.log],
        }


class GatewayCore:
    """Admission gate plus the toy multiply service."""

    def __init__(self, config: GatewayConfig) -> None:
        self.config = config
        self._lock = threading.Lock()
        self._start = 0.0
        self.bucket = TokenBucket(
            capacity=config.capacity,
            tokens=float(config.initial_tokens),
            rate=per_minute_to_per_second(config.rate_per_min),
            last_refill=0.0,
        )
        self.stats = GatewayStats()

    def reset(self, now: float) -> None:
        with self._lock:
            self._start = now
            self.bucket.tokens = float(self.config.initial_tokens)
            self.bucket.last_refill = now
            self.stats = GatewayStats()

    def admit(self, now: float) -> bool:
        """Serialized token check-and-decrement; stats update is atomic with it."""
        with self._lock:
            ok = self.bucket.try_consume(now)
            if ok:
                self.stats.admitted += 1
                self.stats.log.append((now, "admit"))
            else:
                self.stats.rejected += 1
                self.stats.log.append((now, "reject"))
            return ok

    def handle_multiply(self, body: bytes, now: float) -> tuple[int, bytes]:
        try:
            payload = json.loads(body.decode())
            a, b = payload["a"], payload["b"]
            if isinstance(a, bool) or isinstance(b, bool):
                raise TypeError("booleans are not numbers here")
            if not isinstance(a, int) or not isinstance(b, int):
                raise TypeError("a and b must be integers")
        except (ValueError, KeyError, TypeError, UnicodeDecodeError):
            with self._lock:
                self.stats.malformed += 1
            return 400, b'{"error":"body must be JSON {\\"a\\": int, \\"b\\": int}"}'
        if self.admit(now):
            return 200, json.dumps({"result": a * b}).encode()
        return 429, b""

    def conservation_holds(self, now: float) -> bool:
        """Admitted count never exceeds initial tokens plus refill budget."""
        with self._lock:
            budget = self.config.initial_tokens + self.bucket.rate * (now - self._start)
            return self.stats.admitted <= budget + 1e-6


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # buffered writes + TCP_NODELAY keep loopback latency in the sub-ms range
    # (unbuffered header lines otherwise trip Nagle/delayed-ACK stalls)
    wbufsize = -1
    disable_nagle_algorithm = True
    server: "GatewayHTTPServer"

    def _reply(self, status: int, body: bytes) -> None:
        self.send_response(status)
        if body:
            self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0) or 0)
        return self.rfile.read(length) if length else b""

    def do_POST(self) -> None:  # noqa: N802 (http.server naming)
        core = self.server.core
        if self.path == "/multiply":
            status, body = core.handle_multiply(self._read_body(), self.server.now())
            self._reply(status, body)
        elif self.path == "/reset" and core.config.admin_endpoints:
            self._read_body()
            core.reset(self.server.now())
            self._reply(200, b'{"reset":true}')
        else:
            self._reply(404, b"")

    def do_GET(self) -> None:  # noqa: N802
        core = self.server.core
        if self.path == "/stats" and core.config.admin_endpoints:
            self._reply(200, json.dumps(core.stats.as_dict()).encode())
        else:
            self._reply(404, b"")

    def log_message(self, fmt: str, *args) -> None:
        log.debug("gateway: " + fmt, *args)


class GatewayHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, config: GatewayConfig, clock=None) -> None:
        self.request_queue_size = config.backlog
        self.core = GatewayCore(config)
        self._clock = clock if clock is not None else time.monotonic
        super().__init__(config.listen, _Handler)
        _Handler.timeout = config.keepalive_timeout
        self.core.reset(self.now())

    def now(self) -> float:
        return self._clock()

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]


class GatewayServer:
    """Background-thread wrapper around the HTTP server, for embedding."""

    def __init__(self, config: GatewayConfig, clock=None) -> None:
        self.http = GatewayHTTPServer(config, clock)
        self._thread: threading.Thread | None = None

    @property
    def core(self) -> GatewayCore:
        return self.http.core

    @property
    def address(self) -> tuple[str, int]:
        return self.http.address

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(
            target=self.http.serve_forever, name="gateway", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self.http.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None
        self.http.server_close()


def serve(config: GatewayConfig) -> None:
    """Run the gateway in the foreground until interrupted (CLI entry)."""
    server = GatewayHTTPServer(config)
    host, port = server.address
    log.info("gateway listening on %s:%d", host, port)
    print(f"gateway listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
