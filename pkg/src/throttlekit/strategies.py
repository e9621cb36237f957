"""Client-side retry strategies behind a single contract.

Four algorithms decide when a client may transmit the request at the head of
its FIFO queue:

- UnlimitedBackoff (UB): capped exponential backoff with random waits.
- WindowedBackoff (WB): UB plus a sliding-window cap of W sends per 60 s.
- AdaptiveTokenBucket (ATB): a private token bucket whose refill rate grows on
  success and collapses on HTTP 429, remembering the last congestion rate.
- AssistedAdaptiveTokenBucket (AATB): ATB steered by aggregated telemetry
  snapshots instead of per-success growth, with a ``next_acquire`` gate that
  delays sends after observed congestion.

The contract is re-entrant: ``acquire(now)`` returns the earliest instant the
head request may be sent. If the returned time equals ``now`` the strategy has
committed the send (token consumed, attempt logged) and the caller must
transmit immediately; otherwise nothing was committed and the caller should
call ``acquire`` again at the returned time (state may have shifted meanwhile).
Each strategy instance is owned by exactly one client and is not thread-safe.

Rates are configured in tokens per minute, matching the shipped profiles;
internal bucket state is tokens per second.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import deque
from dataclasses import dataclass

from .bucket import EPSILON, TokenBucket, per_minute_to_per_second
from .telemetry import TelemetryChannel, TelemetryReport, TelemetrySnapshot


class RetryStrategy:
    """Base contract; see the module docstring for ``acquire`` semantics."""

    #: seconds between telemetry ticks, or None when the strategy never reports
    report_interval: float | None = None
    #: telemetry reports sent by the routine update path
    update_messages: int = 0
    #: telemetry reports sent while handling a 429
    congestion_messages: int = 0

    def acquire(self, now: float) -> float:
        raise NotImplementedError

    def on_success(self, now: float) -> None:
        pass

    def on_reject(self, now: float) -> None:
        pass

    def on_snapshot(self, snapshot: TelemetrySnapshot | None, now: float) -> None:
        pass

    def on_tick(self, now: float) -> bool:
        """Periodic driver hook; returns True when a telemetry report went out."""
        return False


@dataclass
class BackoffParams:
    """Exponential-backoff knobs shared by UB and WB."""

    initial_bound: float = 1.0
    cap_range: tuple[float, float] = (30.0, 34.0)
    # "double": bound doubles per consecutive reject up to the cap (default).
    # "fresh": every reject draws a new bound from cap_range, no doubling.
    mode: str = "double"


class UnlimitedBackoff(RetryStrategy):
    """Send immediately; on 429 wait Uniform(0, bound), doubling the bound.

    The bound is capped by a per-client draw from ``cap_range`` and resets to
    ``initial_bound`` once the request is served, so each request's retry
    sequence starts fresh.
    """

    def __init__(self, params: BackoffParams, rng) -> None:
        if params.mode not in ("double", "fresh"):
            raise ValueError(f"unknown backoff mode {params.mode!r}")
        self.params = params
        self._rng = rng
        self.cap = float(rng.uniform(*params.cap_range))
        self.upper_bound = float(params.initial_bound)
        self.not_before = float("-inf")
        # (bound in effect, wait drawn) per reject, for audit
        self.wait_log: list[tuple[float, float]] = []

    def acquire(self, now: float) -> float:
        return max(now, self.not_before)

    def on_success(self, now: float) -> None:
        self.upper_bound = float(self.params.initial_bound)
        self.not_before = float("-inf")

    def on_reject(self, now: float) -> None:
        if self.params.mode == "fresh":
            bound = float(self._rng.uniform(*self.params.cap_range))
            wait = float(self._rng.uniform(0.0, bound))
        else:
            bound = self.upper_bound
            wait = float(self._rng.uniform(0.0, bound))
            self.upper_bound = min(2.0 * bound, self.cap)
        self.wait_log.append((bound, wait))
        self.not_before = now + wait


class WindowedBackoff(UnlimitedBackoff):
    """UB layered with a sliding-window cap of W sends per ``window`` seconds.

    Originals and retries both count. After the backoff timer expires the
    window is checked; if full, the send waits for the instant the oldest
    blocking attempt leaves the trailing window.
    """

    def __init__(self, params: BackoffParams, w: int, rng, window: float = 60.0) -> None:
        super().__init__(params, rng)
        if w < 1:
            raise ValueError("W must be >= 1")
        self.w = w
        self.window = window
        self.attempt_log: list[float] = []

    def _window_permit(self, at: float) -> float:
        """Earliest t >= at with fewer than W attempts in (t - window, t]."""
        live_from = bisect_right(self.attempt_log, at - self.window)
        live = self.attempt_log[live_from:]
        if len(live) < self.w:
            return at
        # nudge one nanosecond past the boundary so the freed slot survives
        # float round-off in (permit - window) comparisons
        return live[-self.w] + self.window + 1e-9

    def acquire(self, now: float) -> float:
        t = max(now, self.not_before)
        t = self._window_permit(t)
        if t <= now:
            self.attempt_log.append(now)
            return now
        return t


@dataclass
class AtbParams:
    """Adaptive token bucket configuration (rates in tokens per minute)."""

    sigma_pm: float = 0.6
    delta_pm: float = 0.6
    alpha: float = 1.2
    beta: float = 1.2
    bucket_size: float = 15.0
    initial_rate_pm: float = 15.0
    initial_congestion_pm: float = 30.0
    initial_tokens: float = 1.0


class AdaptiveTokenBucket(RetryStrategy):
    """Private token bucket with success-driven growth and 429-driven collapse.

    On success the per-minute rate becomes ``max(rate + delta, rate * g)``
    where ``g`` is ``alpha`` below the remembered congestion rate and ``beta``
    at or above it. On 429 the congestion rate is recorded, tokens drop to
    zero and the rate falls to ``max(sigma + Uniform(-0.5, 0.5), rate / 2)``.
    """

    def __init__(self, params: AtbParams, rng, start_time: float = 0.0) -> None:
        self.params = params
        self._rng = rng
        self.bucket = TokenBucket(
            capacity=params.bucket_size,
            tokens=params.initial_tokens,
            rate=per_minute_to_per_second(params.initial_rate_pm),
            last_refill=start_time,
        )
        self.last_congestion_pm = float(params.initial_congestion_pm)

    @property
    def rate_pm(self) -> float:
        return self.bucket.rate * 60.0

    def acquire(self, now: float) -> float:
        self.bucket.refill(now)
        if self.bucket.tokens >= 1.0 - EPSILON:
            self.bucket.tokens = max(0.0, self.bucket.tokens - 1.0)
            return now
        return now + (1.0 - self.bucket.tokens) / self.bucket.rate

    def on_success(self, now: float) -> None:
        r = self.rate_pm
        gain = self.params.alpha if r < self.last_congestion_pm else self.params.beta
        new_pm = max(r + self.params.delta_pm, r * gain)
        self.bucket.set_rate(now, per_minute_to_per_second(new_pm))

    def on_reject(self, now: float) -> None:
        r = self.rate_pm
        self.last_congestion_pm = r
        u = float(self._rng.uniform(-0.5, 0.5))
        new_pm = max(self.params.sigma_pm + u, r / 2.0)
        self.bucket.refill(now)
        self.bucket.tokens = 0.0
        self.bucket.rate = per_minute_to_per_second(new_pm)


@dataclass
class AatbParams(AtbParams):
    """AATB adds the telemetry report interval to the ATB knobs."""

    alpha: float = 1.4
    omega: float = 30.0


class AssistedAdaptiveTokenBucket(AdaptiveTokenBucket):
    """ATB variant steered by telemetry snapshots.

    The rate never moves on individual successes. Every ``omega`` seconds the
    client reports its recent send/429 counts and applies the returned
    snapshot: any reported congestion defers ``next_acquire`` by roughly one
    report interval; otherwise the rate grows, faster (``alpha``) when this
    client is loaded below three quarters of the network average. A 429
    triggers an immediate report: the rate drops to a half or a third
    (load-dependent, floored at ``sigma``), one token is granted so the retry
    needs no refill wait, and ``next_acquire`` is pushed out by the estimated
    time for the shared limiter to absorb the reported congestion.

    ``next_acquire`` is monotone: updates can only push it later within a run.
    """

    def __init__(
        self,
        params: AatbParams,
        rng,
        client_id: str,
        channel: TelemetryChannel | None,
        limiter_rate_default_pm: float = 80.0,
        start_time: float = 0.0,
    ) -> None:
        super().__init__(params, rng, start_time)
        self.params: AatbParams = params
        self.report_interval = float(params.omega)
        self.client_id = client_id
        self.channel = channel
        self.limiter_rate_default_pm = limiter_rate_default_pm
        self.next_acquire = float("-inf")
        self.last_rate_change = start_time
        self.last_reported_congestion = float("-inf")
        self._sends: deque[float] = deque()
        self._rejects: deque[float] = deque()

    # -- windowed self-observation ------------------------------------

    def _prune(self, now: float) -> None:
        horizon = now - self.params.omega
        while self._sends and self._sends[0] <= horizon:
            self._sends.popleft()
        while self._rejects and self._rejects[0] <= horizon:
            self._rejects.popleft()

    def _client_load(self, now: float) -> int:
        self._prune(now)
        return len(self._sends)

    def _make_report(self, now: float) -> TelemetryReport:
        self._prune(now)
        # rejects are keyed by their send instant, so a 429 can never outlive
        # the send that caused it inside the report window
        return TelemetryReport(
            client_id=self.client_id,
            window_requests=len(self._sends),
            got_429=min(len(self._rejects), len(self._sends)),
            sent_at=now,
        )

    def _exchange(self, now: float) -> TelemetrySnapshot | None:
        if self.channel is None:
            return None
        return self.channel.exchange(self._make_report(now))

    def _limiter_tps(self, snapshot: TelemetrySnapshot) -> float:
        pm = snapshot.limiter_rate
        if pm is None:
            pm = self.limiter_rate_default_pm
        return per_minute_to_per_second(pm)

    # -- contract ------------------------------------------------------

    def acquire(self, now: float) -> float:
        self.bucket.refill(now)
        if self.bucket.tokens >= 1.0 - EPSILON:
            token_ready = now
        else:
            token_ready = now + (1.0 - self.bucket.tokens) / self.bucket.rate
        ready = max(token_ready, self.next_acquire)
        if ready <= now:
            self.bucket.tokens = max(0.0, self.bucket.tokens - 1.0)
            self._sends.append(now)
            return now
        return ready

    def on_success(self, now: float) -> None:
        # Rate adjustments come only from telemetry.
        pass

    def on_reject(self, now: float) -> None:
        self._rejects.append(self._sends[-1] if self._sends else now)
        self.last_reported_congestion = now
        snapshot = self._exchange(now)
        if self.channel is not None:
            self.congestion_messages += 1
        if snapshot is None or snapshot.active_clients == 0:
            # Degraded mode: behave like plain ATB and stand back one interval.
            super().on_reject(now)
            self.next_acquire = max(self.next_acquire, now + self.params.omega)
            self.last_rate_change = now
            return
        load = self._client_load(now)
        avg = snapshot.total_requests / snapshot.active_clients
        r = self.rate_pm
        divisor = 2.0 if load < 0.5 * avg else 3.0
        new_pm = max(self.params.sigma_pm, r / divisor)
        self.bucket.refill(now)
        self.bucket.rate = per_minute_to_per_second(new_pm)
        self.bucket.tokens = min(1.1, self.bucket.capacity)
        self.last_rate_change = now
        wait = snapshot.reported_429 / self._limiter_tps(snapshot) + float(
            self._rng.uniform(0.0, 1.0)
        )
        self.next_acquire = max(self.next_acquire, now + wait)

    def on_tick(self, now: float) -> bool:
        if now - self.last_reported_congestion < self.params.omega:
            return False
        snapshot = self._exchange(now)
        if self.channel is not None:
            self.update_messages += 1
        self.on_snapshot(snapshot, now)
        return self.channel is not None

    def on_snapshot(self, snapshot: TelemetrySnapshot | None, now: float) -> None:
        if snapshot is None or snapshot.active_clients == 0:
            return
        if snapshot.reported_429 > 0:
            u = float(self._rng.uniform(-2.0, 2.0))
            self.next_acquire = max(self.next_acquire, now + self.params.omega + u)
        elif now - self.last_rate_change >= self.params.omega:
            load = self._client_load(now)
            avg = snapshot.total_requests / snapshot.active_clients
            gain = self.params.alpha if load < 0.75 * avg else self.params.beta
            r = self.rate_pm
            new_pm = max(r * gain, r + self.params.delta_pm)
            self.bucket.set_rate(now, per_minute_to_per_second(new_pm))
            self.last_rate_change = now
