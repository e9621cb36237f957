"""Token bucket arithmetic shared by the gateway limiter and the adaptive clients.

A bucket holds up to ``capacity`` tokens and refills continuously at ``rate``
tokens per second. All state lives in seconds / tokens-per-second; helpers are
provided for the per-minute units used in configuration files.
"""

from __future__ import annotations

from dataclasses import dataclass

# Grant tolerance for float round-trips of the form (n - tokens) / rate * rate.
EPSILON = 1e-9


class ClockRegressionError(ValueError):
    """A bucket operation was given a timestamp earlier than its last refill."""


class CapacityExceededError(ValueError):
    """The requested token count can never accumulate (n > capacity)."""


def per_minute_to_per_second(rate_per_min: float) -> float:
    return rate_per_min / 60.0


def per_second_to_per_minute(rate_per_sec: float) -> float:
    return rate_per_sec * 60.0


@dataclass
class TokenBucket:
    """Continuous-refill token bucket.

    capacity: maximum tokens held (>= 1).
    tokens: current token count, always in [0, capacity].
    rate: refill rate in tokens per second (> 0).
    last_refill: timestamp (seconds) of the last refill.
    """

    capacity: float
    tokens: float
    rate: float
    last_refill: float

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.rate <= 0:
            raise ValueError("rate must be > 0")
        if not 0 <= self.tokens <= self.capacity:
            raise ValueError("tokens must lie in [0, capacity]")

    def refill(self, now: float) -> None:
        """Credit tokens for the elapsed time and advance ``last_refill``."""
        if now < self.last_refill:
            raise ClockRegressionError(
                f"now={now} precedes last_refill={self.last_refill}"
            )
        self.tokens = min(self.capacity, self.tokens + (now - self.last_refill) * self.rate)
        self.last_refill = now

    def try_consume(self, now: float, n: float = 1.0) -> bool:
        """Refill, then take ``n`` tokens if available.

        Returns True and decrements on success; on failure leaves the
        post-refill state untouched.
        """
        if n < 0:
            raise ValueError("n must be >= 0")
        self.refill(now)
        if self.tokens >= n - EPSILON:
            self.tokens = max(0.0, self.tokens - n)
            return True
        return False

    def time_until_tokens(self, now: float, n: float = 1.0) -> float:
        """Seconds until ``n`` tokens are available; 0 if they already are.

        Refills as a side effect, so consuming at ``now + returned`` succeeds.
        """
        if n > self.capacity:
            raise CapacityExceededError(f"n={n} exceeds capacity={self.capacity}")
        self.refill(now)
        if self.tokens >= n - EPSILON:
            return 0.0
        return (n - self.tokens) / self.rate

    def set_rate(self, now: float, rate: float) -> None:
        """Change the refill rate, crediting the elapsed span at the old rate first."""
        if rate <= 0:
            raise ValueError("rate must be > 0")
        self.refill(now)
        self.rate = rate
