"""Golden transition fixtures for alternate ATB implementations.

Emits (state, event, expected) cases covering the three ATB operations so a
port (e.g. the browser service-worker core) can prove numeric equivalence
against this package. Random draws are part of each case, never re-rolled by
the consumer, and expectations are produced by the reference implementation
itself. Regeneration is deterministic, so the committed fixture doubles as a
regression pin for the primary.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bucket import EPSILON
from .strategies import AdaptiveTokenBucket, AtbParams

FIXTURE_VERSION = 1


class _NoRandom:
    def uniform(self, lo=0.0, hi=1.0):
        raise AssertionError("conformance cases carry their draws explicitly")


class _OneShot:
    def __init__(self, value: float) -> None:
        self.value = value

    def uniform(self, lo=0.0, hi=1.0):
        return self.value


def _strategy_from(state: dict, rng) -> AdaptiveTokenBucket:
    params = AtbParams(
        sigma_pm=state["sigma_pm"],
        delta_pm=state["delta_pm"],
        alpha=state["alpha"],
        beta=state["beta"],
        bucket_size=state["bucket_size"],
        initial_rate_pm=state["rate_pm"],
        initial_congestion_pm=state["last_congestion_pm"],
        initial_tokens=min(state["tokens"], state["bucket_size"]),
    )
    atb = AdaptiveTokenBucket(params, rng, start_time=state["last_refill"])
    atb.bucket.tokens = state["tokens"]
    return atb


def _state_of(atb: AdaptiveTokenBucket) -> dict:
    return {
        "bucket_size": atb.bucket.capacity,
        "tokens": atb.bucket.tokens,
        "rate_pm": atb.rate_pm,
        "last_refill": atb.bucket.last_refill,
        "last_congestion_pm": atb.last_congestion_pm,
        "sigma_pm": atb.params.sigma_pm,
        "delta_pm": atb.params.delta_pm,
        "alpha": atb.params.alpha,
        "beta": atb.params.beta,
    }


def apply_event(state: dict, event: dict) -> dict:
    """Reference transition: returns the expectation block for one case."""
    kind = event["type"]
    if kind == "reject":
        atb = _strategy_from(state, _OneShot(event["u"]))
        atb.on_reject(event["now"])
        return {"state": _state_of(atb)}
    atb = _strategy_from(state, _NoRandom())
    if kind == "success":
        atb.on_success(event["now"])
        return {"state": _state_of(atb)}
    if kind == "acquire":
        ready = atb.acquire(event["now"])
        return {
            "state": _state_of(atb),
            "ready_at": ready,
            "granted": ready <= event["now"],
        }
    raise ValueError(f"unknown event type {kind!r}")


def _pinned_cases() -> list[dict]:
    """Documented arithmetic cases every port must hit exactly."""
    base = {"sigma_pm": 0.6, "delta_pm": 0.6, "alpha": 1.2, "beta": 1.2}
    profile = {"bucket_size": 15.0, "last_refill": 0.0, **base}
    return [
        # growth below the remembered congestion rate: max(10.6, 12)
        {"state": {**profile, "tokens": 0.0, "rate_pm": 10.0, "last_congestion_pm": 30.0},
         "event": {"type": "success", "now": 0.0}},
        # growth at or above it: max(40.6, 48)
        {"state": {**profile, "bucket_size": 40.0, "tokens": 0.0, "rate_pm": 40.0,
                   "last_congestion_pm": 30.0},
         "event": {"type": "success", "now": 0.0}},
        # additive floor: max(1.6, 1.2)
        {"state": {**profile, "tokens": 0.0, "rate_pm": 1.0, "last_congestion_pm": 30.0},
         "event": {"type": "reject", "now": 0.0, "u": 0.5}},
        # halving dominates any jitter at 20/min
        {"state": {**profile, "tokens": 3.0, "rate_pm": 20.0, "last_congestion_pm": 30.0},
         "event": {"type": "reject", "now": 0.0, "u": -0.25}},
        # burst pacing: one token short at 15/min waits 4 s
        {"state": {**profile, "tokens": 0.0, "rate_pm": 15.0, "last_congestion_pm": 30.0},
         "event": {"type": "acquire", "now": 0.0}},
        # fractional refill: 0.9 tokens at 15/min -> 0.4 s wait
        {"state": {**profile, "tokens": 0.9, "rate_pm": 15.0, "last_congestion_pm": 30.0},
         "event": {"type": "acquire", "now": 0.0}},
    ]


def generate(count: int = 120, seed: int = 2024) -> dict:
    rng = np.random.default_rng(seed)
    cases = list(_pinned_cases())
    kinds = ["acquire", "success", "reject"]
    while len(cases) < count:
        bucket_size = float(rng.choice([4.0, 15.0, 40.0]))
        last_refill = round(float(rng.uniform(0.0, 500.0)), 6)
        state = {
            "bucket_size": bucket_size,
            "tokens": round(float(rng.uniform(0.0, bucket_size)), 6),
            "rate_pm": round(float(rng.uniform(0.2, 300.0)), 6),
            "last_refill": last_refill,
            "last_congestion_pm": round(float(rng.uniform(0.6, 300.0)), 6),
            "sigma_pm": 0.6,
            "delta_pm": 0.6,
            "alpha": float(rng.choice([1.2, 1.4])),
            "beta": 1.2,
        }
        kind = kinds[len(cases) % len(kinds)]
        event: dict = {"type": kind, "now": round(last_refill + float(rng.uniform(0.0, 60.0)), 6)}
        if kind == "reject":
            event["u"] = round(float(rng.uniform(-0.5, 0.5)), 6)
        cases.append({"state": state, "event": event})
    for case in cases:
        case["expect"] = apply_event(case["state"], case["event"])
    return {"version": FIXTURE_VERSION, "epsilon": EPSILON, "seed": seed, "cases": cases}


def render(fixture: dict) -> str:
    return json.dumps(fixture, indent=1, sort_keys=True) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="emit ATB conformance fixtures")
    parser.add_argument("--out", default="-", help="output path ('-' for stdout)")
    parser.add_argument("--count", type=int, default=120)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args(argv)
    text = render(generate(args.count, args.seed))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
