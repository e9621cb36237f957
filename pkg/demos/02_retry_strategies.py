"""The four client-side retry strategies, side by side.

Each strategy answers one question: when may the next request go out?
- UB  doubles a random backoff bound after every 429 and resets on success.
- WB  adds a sliding window: at most W sends (originals and retries) per 60 s.
- ATB runs a private token bucket whose rate climbs on success and collapses
      on 429, remembering where congestion started.
- AATB moves rate control into periodic telemetry exchanges and gates sends
      behind `next_acquire` after anyone reports congestion.
"""

import numpy as np

from throttlekit import (
    AatbParams,
    AssistedAdaptiveTokenBucket,
    AtbParams,
    AdaptiveTokenBucket,
    BackoffParams,
    UnlimitedBackoff,
    WindowedBackoff,
)
from throttlekit.telemetry import TelemetryChannel, TelemetrySnapshot


print("=== UB: exponential backoff with a per-client cap ===")
ub = UnlimitedBackoff(BackoffParams(), np.random.default_rng(1))
print(f"cap drawn once from U[30, 34]: {ub.cap:.2f}s")
for k in range(6):
    bound = ub.upper_bound
    ub.on_reject(0.0)
    print(f"  429 #{k + 1}: wait ~ U(0, {bound:4.1f}) -> drew {ub.wait_log[-1][1]:5.2f}s")
ub.on_success(0.0)
print(f"success resets the bound to {ub.upper_bound}s for the next request")

print("\n=== WB: UB plus a 4-per-60s sliding window ===")
wb = WindowedBackoff(BackoffParams(), w=4, rng=np.random.default_rng(2))
now = 0.0
for i in range(6):
    ready = wb.acquire(now)
    if ready > now:
        print(f"  send #{i + 1}: window full, wait until t={ready:.1f}s")
        now = ready
        wb.acquire(now)
    else:
        print(f"  send #{i + 1}: immediate at t={now:.1f}s")
    now += 1.0  # the client is bursting: one attempt per second

print("\n=== ATB: the bucket rate climbs on success, halves on 429 ===")
atb = AdaptiveTokenBucket(AtbParams(initial_rate_pm=40.0, bucket_size=40.0,
                                    initial_congestion_pm=300.0),
                          np.random.default_rng(3))
for i in range(4):
    atb.on_success(float(i))
    print(f"  success -> rate {atb.rate_pm:6.2f}/min")
atb.on_reject(4.0)
print(f"  429     -> rate {atb.rate_pm:6.2f}/min, congestion mark "
      f"{atb.last_congestion_pm:.1f}/min, tokens reset to {atb.bucket.tokens}")

print("\n=== AATB: telemetry-steered, with a network-wide pause on congestion ===")


class CannedChannel(TelemetryChannel):
    def __init__(self, snapshot):
        self.snapshot = snapshot

    def exchange(self, report):
        return self.snapshot


quiet = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=0,
                          limiter_rate=80.0)
congested = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=3,
                              limiter_rate=80.0)

aatb = AssistedAdaptiveTokenBucket(AatbParams(), np.random.default_rng(4),
                                   client_id="demo", channel=CannedChannel(quiet))
aatb.last_rate_change = -100.0
aatb.on_snapshot(quiet, 30.0)
print(f"quiet network at a routine tick -> rate grows to {aatb.rate_pm:.2f}/min")
aatb.on_snapshot(congested, 60.0)
print(f"someone reported 429s -> sends deferred until t={aatb.next_acquire:.1f}s")
aatb.on_reject(70.0)
print(f"own 429 -> rate {aatb.rate_pm:.2f}/min, one token granted "
      f"({aatb.bucket.tokens}), retry gate at t={aatb.next_acquire:.1f}s")
