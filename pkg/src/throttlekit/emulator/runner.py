"""Experiment orchestration: replay a trace through a strategy against the
gateway (and telemetry server for AATB), repeatedly, and collect metrics.

The virtual clock is the default: gateway, telemetry and clients all run
embedded in one deterministic event loop, so a full 300 s scenario takes
fractions of a second and identical (seed, config) pairs produce
byte-identical archives. Wall mode (see ``wall.py``) drives the same strategy
code over real sockets, optionally time-scaled.

Per-client randomness comes from independent streams seeded with
(experiment seed, run index, client id digest); run repetitions never share
draws. The embedded gateway's two ledgers (client-side records vs admission
counters) are reconciled exactly after every run.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..gateway import GatewayConfig, GatewayCore
from ..profiles import PROFILES, STRATEGIES, StrategyProfile, make_strategy, workload_config
from ..telemetry import Aggregator, EmbeddedChannel
from ..workload import TraceDataset, dumps_dataset, gen_synthetic, load_dataset
from .client import ClientActor, VirtualGatewayLink
from .engine import EventLoop
from .metrics import (
    RunMetrics,
    Summary,
    canonical_json,
    compute_run_metrics,
    sha256_text,
    summarize,
    write_archive,
)


class ExperimentSetupError(RuntimeError):
    """Configuration or environment problem detected before any run starts."""


@dataclass
class ExperimentConfig:
    strategy: str = "ub"
    profile: str = "synth5"
    dataset: str | None = None  # path; None -> generate from the profile recipe
    size: int | None = None  # synthetic target size when generating
    dataset_seed: int = 0
    runs: int = 30
    clock: str = "virtual"  # or "wall"
    time_scale: float = 1.0
    seed: int = 0
    virtual_rtt: float = 0.001
    strategy_params: dict = field(default_factory=dict)
    gateway: dict = field(default_factory=dict)  # capacity / rate_per_min / initial_tokens
    start_offset_max: float | None = None  # None -> profile default
    limiter_rate_in_snapshots: bool = True
    gateway_url: str | None = None  # external gateway (wall clock only)
    telemetry_addr: str | None = None  # external telemetry "host:port" (wall only)
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {tuple(PROFILES)}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.clock not in ("virtual", "wall"):
            raise ValueError("clock must be 'virtual' or 'wall'")
        if self.clock == "virtual" and (self.gateway_url or self.telemetry_addr):
            raise ValueError("external endpoints require the wall clock")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be > 0")

    def gateway_config(self) -> GatewayConfig:
        return GatewayConfig(
            capacity=float(self.gateway.get("capacity", 100.0)),
            rate_per_min=float(self.gateway.get("rate_per_min", 80.0)),
            initial_tokens=self.gateway.get("initial_tokens"),
        )

    def strategy_profile(self) -> StrategyProfile:
        return PROFILES[self.profile]

    def effective_offset_max(self) -> float:
        if self.start_offset_max is not None:
            return self.start_offset_max
        return self.strategy_profile().start_offset_max

    def omega(self) -> float:
        return float(self.strategy_params.get("omega", self.strategy_profile().aatb.omega))

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    def config_hash(self) -> str:
        obj = {k: v for k, v in self.as_dict().items() if k != "out_dir"}
        return sha256_text(canonical_json(obj))

    def context_hash(self, dataset_hash: str) -> str:
        """Hash of everything two comparable experiments must share (dataset,
        gateway, clock, repetition protocol) — strategy choice excluded."""
        obj = {
            k: v
            for k, v in self.as_dict().items()
            if k not in ("strategy", "strategy_params", "out_dir")
        }
        obj["dataset_hash"] = dataset_hash
        return sha256_text(canonical_json(obj))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    dataset: TraceDataset
    dataset_hash: str
    runs: list[RunMetrics]
    summary: Summary
    meta: dict


def client_stream_key(client_id: str) -> int:
    return int.from_bytes(hashlib.sha256(client_id.encode()).digest()[:8], "big")


def client_rng(seed: int, run_index: int, client_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, run_index, client_stream_key(client_id)])
    )


def resolve_dataset(config: ExperimentConfig) -> tuple[TraceDataset, str]:
    if config.dataset is not None:
        if not os.path.exists(config.dataset):
            raise ExperimentSetupError(f"dataset not found: {config.dataset}")
        return load_dataset(config.dataset)
    synth = workload_config(config.profile, config.size, config.dataset_seed)
    ds = gen_synthetic(synth)
    return ds, sha256_text(dumps_dataset(ds))


def run_virtual_once(
    config: ExperimentConfig, dataset: TraceDataset, run_index: int
) -> RunMetrics:
    loop = EventLoop()
    gw_cfg = config.gateway_config()
    gateway = GatewayCore(gw_cfg)
    gateway.reset(0.0)
    link = VirtualGatewayLink(loop, gateway, config.virtual_rtt)

    channel = None
    if config.strategy == "aatb":
        aggregator = Aggregator(
            horizon=2.0 * config.omega(),
            limiter_rate_pm=gw_cfg.rate_per_min if config.limiter_rate_in_snapshots else None,
        )
        channel = EmbeddedChannel(aggregator, lambda: loop.now)

    profile = config.strategy_profile()
    offset_max = config.effective_offset_max()
    actors: list[ClientActor] = []
    for order, (cid, reqs) in enumerate(sorted(dataset.by_client().items()), start=1):
        rng = client_rng(config.seed, run_index, cid)
        offset = float(rng.uniform(0.0, offset_max)) if offset_max > 0 else 0.0
        start = reqs[0].arrival_time + offset
        strategy = make_strategy(
            config.strategy,
            profile,
            rng,
            client_id=cid,
            channel=channel,
            limiter_rate_pm=gw_cfg.rate_per_min,
            start_time=start,
            overrides=config.strategy_params,
        )
        actors.append(ClientActor(cid, reqs, strategy, loop, order, link, offset))

    for actor in actors:
        actor.start()
    loop.run()

    stuck = [a.client_id for a in actors if not a.done]
    if stuck:
        raise RuntimeError(f"virtual run drained with unserved clients: {stuck}")

    records = [rec for a in actors for rec in a.records.values()]
    total_429 = sum(r.rejects for r in records)
    if total_429 != gateway.stats.rejected or len(records) != gateway.stats.admitted:
        raise RuntimeError(
            "ledger mismatch: clients saw "
            f"({len(records)} served, {total_429} rejects), gateway counted "
            f"({gateway.stats.admitted}, {gateway.stats.rejected})"
        )
    if not gateway.conservation_holds(loop.now):
        raise RuntimeError("gateway admitted more than its token budget")

    return compute_run_metrics(
        run_index=run_index,
        records=records,
        update_messages=sum(a.strategy.update_messages for a in actors),
        congestion_messages=sum(a.strategy.congestion_messages for a in actors),
        gateway_admitted=gateway.stats.admitted,
        gateway_rejected=gateway.stats.rejected,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    dataset, dataset_hash = resolve_dataset(config)
    if len(dataset) == 0:
        raise ExperimentSetupError("dataset is empty")

    if config.clock == "virtual":
        runs = [run_virtual_once(config, dataset, i) for i in range(config.runs)]
    else:
        from .wall import run_wall_experiment

        runs = run_wall_experiment(config, dataset)

    config_hash = config.config_hash()
    context_hash = config.context_hash(dataset_hash)
    summary = summarize(
        runs, len(dataset), config.strategy, config_hash, dataset_hash, context_hash
    )
    meta = {
        "config": {k: v for k, v in config.as_dict().items() if k != "out_dir"},
        "config_hash": config_hash,
        "dataset_hash": dataset_hash,
        "context_hash": context_hash,
        "dataset_label": dataset.label,
        "dataset_size": len(dataset),
    }
    if config.out_dir:
        write_archive(config.out_dir, meta, runs, summary)
    return ExperimentResult(config, dataset, dataset_hash, runs, summary, meta)
