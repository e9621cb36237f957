"""throttlekit: client-side retry and rate-limiting algorithms with a
token-bucket gateway, telemetry channel, offline scheduling oracle, and a
trace-driven emulation harness."""

__version__ = "0.1.0"

from .bucket import TokenBucket, per_minute_to_per_second, per_second_to_per_minute
from .gateway import GatewayConfig, GatewayCore, GatewayServer
from .profiles import PROFILES, STRATEGIES, make_strategy, workload_config
from .strategies import (
    AatbParams,
    AdaptiveTokenBucket,
    AssistedAdaptiveTokenBucket,
    AtbParams,
    BackoffParams,
    UnlimitedBackoff,
    WindowedBackoff,
)
from .telemetry import (
    Aggregator,
    TelemetryReport,
    TelemetryServer,
    TelemetrySnapshot,
    UdpChannel,
)
from .workload import (
    Request,
    SynthConfig,
    TraceDataset,
    build_real_dataset,
    gen_synthetic,
    load_dataset,
    parse_access_log,
    save_dataset,
)

__all__ = [
    "AatbParams",
    "AdaptiveTokenBucket",
    "Aggregator",
    "AssistedAdaptiveTokenBucket",
    "AtbParams",
    "BackoffParams",
    "GatewayConfig",
    "GatewayCore",
    "GatewayServer",
    "PROFILES",
    "Request",
    "STRATEGIES",
    "SynthConfig",
    "TelemetryReport",
    "TelemetryServer",
    "TelemetrySnapshot",
    "TokenBucket",
    "TraceDataset",
    "UdpChannel",
    "UnlimitedBackoff",
    "WindowedBackoff",
    "build_real_dataset",
    "gen_synthetic",
    "load_dataset",
    "make_strategy",
    "parse_access_log",
    "per_minute_to_per_second",
    "per_second_to_per_minute",
    "save_dataset",
    "workload_config",
]
