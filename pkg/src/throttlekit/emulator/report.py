"""Render metrics archives into tables, plot-ready CSV, and baseline deltas.

Archives merge into per-dataset-size series of mean and standard deviation for
the three headline metrics (429 errors, total duration, service time). Two
archives claiming the same (dataset size, strategy) cell must agree on their
context hash (dataset, gateway, clock, repetition protocol); otherwise the
merge is refused as ambiguous. Percentage deltas against a named baseline
strategy are computed within matching contexts only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from ..oracle import InfeasibleInstanceError, ProblemInstance, objective, solve_greedy
from .metrics import METRIC_NAMES, RunMetrics, mean_std, read_archive

PANEL_METRICS = ("total_429", "total_duration", "avg_service_time")


@dataclass
class ArchiveSeries:
    dataset_size: int
    strategy: str
    context_hash: str
    config_hash: str
    runs: list[RunMetrics]

    def stats(self) -> dict[str, tuple[float, float]]:
        return {m: mean_std([r.metric(m) for r in self.runs]) for m in METRIC_NAMES}


class MergeError(ValueError):
    """Archives are not mutually comparable."""


def load_series(archive_dirs: list[str]) -> list[ArchiveSeries]:
    if not archive_dirs:
        raise ValueError("no archives given")
    series: dict[tuple[int, str], ArchiveSeries] = {}
    for path in archive_dirs:
        meta, runs = read_archive(path)
        entry = ArchiveSeries(
            dataset_size=meta["dataset_size"],
            strategy=meta["config"]["strategy"],
            context_hash=meta["context_hash"],
            config_hash=meta["config_hash"],
            runs=runs,
        )
        key = (entry.dataset_size, entry.strategy)
        if key in series:
            prior = series[key]
            if prior.context_hash != entry.context_hash:
                raise MergeError(
                    f"archives disagree for size={key[0]} strategy={key[1]}: "
                    f"context {prior.context_hash[:12]} vs {entry.context_hash[:12]}"
                )
            prior.runs.extend(runs)
        else:
            series[key] = entry
    return [series[k] for k in sorted(series)]


def series_csv(series: list[ArchiveSeries]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset_size", "strategy", "metric", "mean", "stddev"])
    for entry in series:
        stats = entry.stats()
        for metric in METRIC_NAMES:
            mean, std = stats[metric]
            writer.writerow([entry.dataset_size, entry.strategy, metric, repr(mean), repr(std)])
    return buf.getvalue()


def deltas_vs_baseline(series: list[ArchiveSeries], baseline: str) -> list[dict]:
    """Per (size, strategy): error reduction % and duration/service increase %."""
    base_by_size = {
        e.dataset_size: e for e in series if e.strategy == baseline
    }
    rows: list[dict] = []
    for entry in series:
        if entry.strategy == baseline:
            continue
        base = base_by_size.get(entry.dataset_size)
        if base is None or base.context_hash != entry.context_hash:
            continue
        b, s = base.stats(), entry.stats()
        row = {"dataset_size": entry.dataset_size, "strategy": entry.strategy}
        b429 = b["total_429"][0]
        row["error_reduction_pct"] = (
            math.nan if b429 == 0 else 100.0 * (b429 - s["total_429"][0]) / b429
        )
        for metric, label in (
            ("total_duration", "duration_increase_pct"),
            ("avg_service_time", "service_time_increase_pct"),
        ):
            bv = b[metric][0]
            row[label] = math.nan if bv == 0 else 100.0 * (s[metric][0] - bv) / bv
        rows.append(row)
    return rows


def render_table(series: list[ArchiveSeries], deltas: list[dict] | None = None) -> str:
    lines = []
    header = f"{'size':>6} {'strategy':>8} " + " ".join(f"{m:>24}" for m in PANEL_METRICS)
    lines.append(header)
    lines.append("-" * len(header))
    for entry in series:
        stats = entry.stats()
        cells = " ".join(
            f"{stats[m][0]:>13.2f} ±{stats[m][1]:>8.2f}" for m in PANEL_METRICS
        )
        lines.append(f"{entry.dataset_size:>6} {entry.strategy:>8} {cells}")
    if deltas:
        lines.append("")
        lines.append(
            f"{'size':>6} {'strategy':>8} {'err reduction %':>16} "
            f"{'duration +%':>12} {'service +%':>12}"
        )
        for row in deltas:
            lines.append(
                f"{row['dataset_size']:>6} {row['strategy']:>8} "
                f"{row['error_reduction_pct']:>16.1f} {row['duration_increase_pct']:>12.1f} "
                f"{row['service_time_increase_pct']:>12.1f}"
            )
    return "\n".join(lines)


def oracle_bound_check(meta: dict, runs: list[RunMetrics]) -> list[dict]:
    """Sanity check: the offline schedule never waits longer than the run did.

    Response times are compared at slot granularity (service instants rounded
    up to whole slots), which is the resolution the offline model works at.
    Skipped (empty result) when the gateway started with a non-default token
    fill, since the model assumes a full initial bucket.
    """
    gw = meta["config"].get("gateway", {})
    capacity = float(gw.get("capacity", 100.0))
    rate_per_slot = float(gw.get("rate_per_min", 80.0)) / 60.0
    initial = gw.get("initial_tokens")
    if initial is not None and float(initial) != capacity:
        return []
    results = []
    for run in runs:
        arrivals: dict[str, list[float]] = {}
        observed_slotted = 0.0
        observed = 0.0
        last_served = 0.0
        for rec in sorted(run.requests, key=lambda r: (r.client_id, r.seq)):
            arrivals.setdefault(rec.client_id, []).append(rec.arrival)
            observed_slotted += math.ceil(rec.served) - rec.arrival
            observed += rec.served - rec.arrival
            last_served = max(last_served, rec.served)
        instance = ProblemInstance(
            capacity=capacity,
            rate=rate_per_slot,
            t_max=int(math.ceil(last_served)) + 1,
            arrivals=arrivals,
        )
        try:
            bound = objective(instance, solve_greedy(instance))
        except InfeasibleInstanceError:
            results.append({"run_index": run.run_index, "ok": False, "note": "infeasible"})
            continue
        results.append(
            {
                "run_index": run.run_index,
                "oracle_objective": bound,
                "observed_response_time": observed,
                "observed_response_time_slotted": observed_slotted,
                "ok": bound <= observed_slotted + 1e-6,
            }
        )
    return results
