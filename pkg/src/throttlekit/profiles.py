"""Shipped parameter profiles for the three evaluation scenarios.

``real`` targets replayed access-log traces, ``synth5`` a five-client service
mesh, ``synth100`` a hundred-client public endpoint. The AATB profile is the
same in all three scenarios. Workload profiles pair each scenario with its
request-range recipe; the gateway default is a 100-token bucket refilled at 80
tokens per minute.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .gateway import GatewayConfig
from .strategies import (
    AatbParams,
    AdaptiveTokenBucket,
    AssistedAdaptiveTokenBucket,
    AtbParams,
    BackoffParams,
    RetryStrategy,
    UnlimitedBackoff,
    WindowedBackoff,
)
from .workload import SynthConfig

STRATEGIES = ("ub", "wb", "atb", "aatb")

_AATB_COMMON = AatbParams(
    sigma_pm=0.6,
    delta_pm=0.6,
    alpha=1.4,
    beta=1.2,
    bucket_size=15.0,
    initial_rate_pm=15.0,
    initial_congestion_pm=30.0,
    initial_tokens=1.0,
    omega=30.0,
)


@dataclass(frozen=True)
class StrategyProfile:
    name: str
    backoff: BackoffParams = field(default_factory=BackoffParams)
    wb_w: int = 15
    atb: AtbParams = field(default_factory=AtbParams)
    aatb: AatbParams = field(default_factory=lambda: _AATB_COMMON)
    # per-run uniform client start delay ceiling (traces without baked-in offsets)
    start_offset_max: float = 0.0


PROFILES: dict[str, StrategyProfile] = {
    "real": StrategyProfile(
        name="real",
        wb_w=15,
        atb=AtbParams(bucket_size=15.0, initial_rate_pm=15.0, initial_congestion_pm=30.0),
        start_offset_max=10.0,
    ),
    "synth5": StrategyProfile(
        name="synth5",
        wb_w=40,
        atb=AtbParams(bucket_size=40.0, initial_rate_pm=40.0, initial_congestion_pm=300.0),
    ),
    "synth100": StrategyProfile(
        name="synth100",
        wb_w=4,
        atb=AtbParams(bucket_size=4.0, initial_rate_pm=4.0, initial_congestion_pm=12.0),
    ),
}

WORKLOADS: dict[str, SynthConfig] = {
    "synth5": SynthConfig(num_clients=5, request_range=(1, 200)),
    # the 12 s within-burst gap is a shipped recipe constant: each client's
    # handful of requests arrives as one tight episode at a random position
    "synth100": SynthConfig(num_clients=100, request_range=(1, 10), arrival_scale_s=12.0),
}

DEFAULT_GATEWAY = GatewayConfig()


def workload_config(profile: str, size: int | None, seed: int) -> SynthConfig:
    if profile not in WORKLOADS:
        raise ValueError(f"profile {profile!r} has no synthetic workload recipe")
    return replace(WORKLOADS[profile], size=size, seed=seed)


def _apply_overrides(params, overrides: dict | None):
    if not overrides:
        return params
    known = {k: v for k, v in overrides.items() if hasattr(params, k)}
    return replace(params, **known)


def make_strategy(
    strategy: str,
    profile: StrategyProfile,
    rng,
    client_id: str,
    channel=None,
    limiter_rate_pm: float = 80.0,
    start_time: float = 0.0,
    overrides: dict | None = None,
) -> RetryStrategy:
    """Instantiate one client's strategy from a profile plus config overrides."""
    if strategy == "ub":
        return UnlimitedBackoff(_apply_overrides(profile.backoff, overrides), rng)
    if strategy == "wb":
        w = int(overrides.get("w", profile.wb_w)) if overrides else profile.wb_w
        return WindowedBackoff(_apply_overrides(profile.backoff, overrides), w, rng)
    if strategy == "atb":
        return AdaptiveTokenBucket(
            _apply_overrides(profile.atb, overrides), rng, start_time=start_time
        )
    if strategy == "aatb":
        return AssistedAdaptiveTokenBucket(
            _apply_overrides(profile.aatb, overrides),
            rng,
            client_id=client_id,
            channel=channel,
            limiter_rate_default_pm=limiter_rate_pm,
            start_time=start_time,
        )
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
