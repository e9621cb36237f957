"""Token bucket arithmetic: the primitive everything else builds on.

A bucket holds up to `capacity` tokens and refills continuously at `rate`
tokens per second. Admitting a request costs one token; an empty bucket means
HTTP 429. Run this to watch the ledger evolve.
"""

from throttlekit import TokenBucket, per_minute_to_per_second

# The gateway default: 100-token burst capacity, 80 tokens per minute.
bucket = TokenBucket(capacity=100.0, tokens=100.0,
                     rate=per_minute_to_per_second(80.0), last_refill=0.0)

print("burst phase: the initial 100 tokens absorb a burst at t=0")
admitted = sum(bucket.try_consume(0.0) for _ in range(120))
print(f"  120 offered at t=0 -> {admitted} admitted, {bucket.tokens:.2f} tokens left")

print("\nrefill phase: 80 tokens/minute trickle back in")
for t in (15.0, 30.0, 60.0):
    bucket.refill(t)
    print(f"  t={t:5.1f}s  tokens={bucket.tokens:6.2f}")

print("\nwaiting for a token: time_until_tokens answers exactly")
bucket.tokens = 0.0
wait = bucket.time_until_tokens(60.0)
print(f"  empty bucket at t=60 -> next token in {wait:.3f}s")
assert bucket.try_consume(60.0 + wait)

# The hard budget: over any window [0, T], admissions can never exceed
# initial_tokens + rate * T. Over five minutes that is 100 + 400 = 500.
print("\nfive-minute budget: 100 initial + 80/min * 5 min = 500 admissions max")
bucket = TokenBucket(capacity=100.0, tokens=100.0,
                     rate=per_minute_to_per_second(80.0), last_refill=0.0)
admitted = sum(bucket.try_consume(300.0 * i / 799) for i in range(800))
print(f"  800 spread over 300s -> {admitted} admitted")
