"""Trace-driven emulation: virtual-clock and wall-clock experiment runners."""

from .client import ClientActor, RequestRecord, VirtualGatewayLink
from .engine import EventLoop
from .metrics import RunMetrics, Summary, read_archive, summarize, write_archive
from .runner import (
    ExperimentConfig,
    ExperimentResult,
    ExperimentSetupError,
    client_rng,
    resolve_dataset,
    run_experiment,
    run_virtual_once,
)

__all__ = [
    "ClientActor",
    "EventLoop",
    "ExperimentConfig",
    "ExperimentResult",
    "ExperimentSetupError",
    "RequestRecord",
    "RunMetrics",
    "Summary",
    "VirtualGatewayLink",
    "client_rng",
    "read_archive",
    "resolve_dataset",
    "run_experiment",
    "run_virtual_once",
    "summarize",
    "write_archive",
]
