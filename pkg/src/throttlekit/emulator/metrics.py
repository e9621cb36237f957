"""Run metrics, cross-run summaries, and the on-disk archive format.

A metrics archive is one directory per experiment: ``meta.json`` (config echo
plus hashes), one ``run_NNN.json`` per repetition, and ``summary.csv`` with
plot-ready rows ``dataset_size,strategy,metric,mean,stddev``. Every file is a
pure function of (seed, config, dataset), so identical experiments produce
byte-identical archives.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field

from .client import RequestRecord

METRIC_NAMES = ("total_429", "total_duration", "avg_service_time", "update_messages")


@dataclass
class RunMetrics:
    run_index: int
    total_duration: float
    avg_service_time: float
    total_429: int
    update_messages: int
    congestion_messages: int
    gateway_admitted: int
    gateway_rejected: int
    requests: list[RequestRecord] = field(default_factory=list)
    reseeded: int = 0  # transport-invalidated attempts before this run went through

    def metric(self, name: str) -> float:
        return float(getattr(self, name))

    def as_dict(self) -> dict:
        return {
            "run_index": self.run_index,
            "total_duration": self.total_duration,
            "avg_service_time": self.avg_service_time,
            "total_429": self.total_429,
            "update_messages": self.update_messages,
            "congestion_messages": self.congestion_messages,
            "gateway_admitted": self.gateway_admitted,
            "gateway_rejected": self.gateway_rejected,
            "reseeded": self.reseeded,
            "requests": [
                {
                    "client_id": r.client_id,
                    "seq": r.seq,
                    "arrival": r.arrival,
                    "first_send": r.first_send,
                    "served": r.served,
                    "attempts": r.attempts,
                    "rejects": r.rejects,
                }
                for r in self.requests
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunMetrics":
        records = [
            RequestRecord(
                client_id=r["client_id"],
                seq=r["seq"],
                arrival=r["arrival"],
                first_send=r["first_send"],
                served=r["served"],
                attempts=r["attempts"],
                rejects=r["rejects"],
            )
            for r in obj.get("requests", [])
        ]
        return cls(
            run_index=obj["run_index"],
            total_duration=obj["total_duration"],
            avg_service_time=obj["avg_service_time"],
            total_429=obj["total_429"],
            update_messages=obj["update_messages"],
            congestion_messages=obj.get("congestion_messages", 0),
            gateway_admitted=obj.get("gateway_admitted", 0),
            gateway_rejected=obj.get("gateway_rejected", 0),
            requests=records,
            reseeded=obj.get("reseeded", 0),
        )


def compute_run_metrics(
    run_index: int,
    records: list[RequestRecord],
    update_messages: int,
    congestion_messages: int,
    gateway_admitted: int,
    gateway_rejected: int,
    reseeded: int = 0,
) -> RunMetrics:
    """Derive the run's metrics purely from its event records."""
    if not records:
        raise ValueError("run produced no request records")
    unserved = [r for r in records if r.served is None or r.first_send is None]
    if unserved:
        raise RuntimeError(f"{len(unserved)} requests never served; first: {unserved[0]}")
    total_duration = max(r.served for r in records) - min(r.arrival for r in records)
    avg_service = sum(r.served - r.first_send for r in records) / len(records)
    total_429 = sum(r.rejects for r in records)
    return RunMetrics(
        run_index=run_index,
        total_duration=total_duration,
        avg_service_time=avg_service,
        total_429=total_429,
        update_messages=update_messages,
        congestion_messages=congestion_messages,
        gateway_admitted=gateway_admitted,
        gateway_rejected=gateway_rejected,
        requests=sorted(records, key=lambda r: (r.client_id, r.seq)),
        reseeded=reseeded,
    )


def mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = sum(values) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


@dataclass
class Summary:
    dataset_size: int
    strategy: str
    stats: dict[str, tuple[float, float]]  # metric -> (mean, stddev)
    config_hash: str
    dataset_hash: str
    context_hash: str
    runs: int

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dataset_size", "strategy", "metric", "mean", "stddev"])
        for metric in METRIC_NAMES:
            mean, std = self.stats[metric]
            writer.writerow([self.dataset_size, self.strategy, metric, repr(mean), repr(std)])
        return buf.getvalue()


def summarize(
    runs: list[RunMetrics],
    dataset_size: int,
    strategy: str,
    config_hash: str,
    dataset_hash: str,
    context_hash: str,
) -> Summary:
    stats = {name: mean_std([r.metric(name) for r in runs]) for name in METRIC_NAMES}
    return Summary(dataset_size, strategy, stats, config_hash, dataset_hash, context_hash, len(runs))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_archive(out_dir: str, meta: dict, runs: list[RunMetrics], summary: Summary) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        fh.write(canonical_json(meta))
        fh.write("\n")
    for run in runs:
        path = os.path.join(out_dir, f"run_{run.run_index:03d}.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(run.as_dict()))
            fh.write("\n")
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write(summary.csv_text())


def read_archive(out_dir: str) -> tuple[dict, list[RunMetrics]]:
    meta_path = os.path.join(out_dir, "meta.json")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"{out_dir} is not a metrics archive (no meta.json)")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    runs = []
    for name in sorted(os.listdir(out_dir)):
        if name.startswith("run_") and name.endswith(".json"):
            with open(os.path.join(out_dir, name), "r", encoding="utf-8") as fh:
                runs.append(RunMetrics.from_dict(json.load(fh)))
    if not runs:
        raise ValueError(f"archive {out_dir} holds no runs")
    return meta, runs
