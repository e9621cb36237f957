"""Request traces: synthetic generators, access-log ingestion, and file I/O.

A trace dataset is a list of per-client request arrivals inside a horizon
(default 300 s). Synthetic generation follows the scenario recipe: every
client gets one request plus a Poisson(lambda) count with lambda = (hi-lo)/2
of the configured request range, clients start at a Uniform[0, 10] offset, and
arrival timestamps are exponentially distributed.

Three arrival layouts are supported; the one used is recorded in the dataset
metadata:

- "wrapped" (default): each client is a stationary renewal process with
  exponential inter-arrival gaps (scale ``lambda`` seconds unless overridden),
  folded onto the horizon circle at a uniform random phase. Every arrival
  lands inside the horizon, so an exact total ``size`` is honored, and the
  per-client texture follows the gap scale: small scales give tight bursts at
  a random position, large scales approach uniform spread.
- "absolute": each timestamp is an independent draw from an exponential with
  scale ``lambda`` minutes, truncated to the horizon via the inverse CDF.
  Also size-exact; load decays over the interval.
- "gaps": inter-arrival gaps with scale ``lambda`` seconds cumulated from the
  start offset, truncated at the horizon. Arrivals past the horizon are
  dropped, so ``size`` is only a pre-truncation target here.

File format: one comment header line carrying version, seed and generator
config as JSON, then CSV rows ``client_id,seq,arrival_time_s,a,b``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

log = logging.getLogger(__name__)

DATASET_MAGIC = "#throttlekit-dataset"
DATASET_VERSION = 1
_PAYLOAD_MAX = 1000  # exclusive upper bound for the toy multiply operands


class LogFormatError(ValueError):
    """Access log is unreadable as ``timestamp_iso8601,ip`` lines."""


class DatasetFormatError(ValueError):
    """Dataset file failed to parse; message carries the offending line."""


@dataclass(frozen=True)
class Request:
    client_id: str
    seq: int
    arrival_time: float
    payload: tuple[int, int]


@dataclass
class TraceDataset:
    requests: list[Request]
    user_count: int
    last_timestamp: float
    label: str
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.requests)

    def by_client(self) -> dict[str, list[Request]]:
        out: dict[str, list[Request]] = {}
        for r in self.requests:
            out.setdefault(r.client_id, []).append(r)
        for reqs in out.values():
            reqs.sort(key=lambda r: r.seq)
        return out


@dataclass
class SynthConfig:
    num_clients: int
    request_range: tuple[int, int]
    horizon: float = 300.0
    seed: int = 0
    size: int | None = None  # exact total request count (wrapped/absolute modes)
    arrival_mode: str = "wrapped"  # or "absolute" / "gaps"
    arrival_scale_s: float | None = None  # None -> mode default from lambda
    start_offset_max: float = 10.0

    def __post_init__(self) -> None:
        lo, hi = self.request_range
        if lo < 1 or hi < lo:
            raise ValueError("request_range must satisfy 1 <= lo <= hi")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.arrival_mode not in ("wrapped", "absolute", "gaps"):
            raise ValueError(f"unknown arrival_mode {self.arrival_mode!r}")
        if self.size is not None and self.size < self.num_clients:
            raise ValueError("size must allow one request per client")

    @property
    def lam(self) -> float:
        lo, hi = self.request_range
        return (hi - lo) / 2.0

    @property
    def scale_s(self) -> float:
        if self.arrival_scale_s is not None:
            return self.arrival_scale_s
        # absolute draws live on the minute scale of the rate configs;
        # gap-based modes read the scale directly in seconds.
        return self.lam * 60.0 if self.arrival_mode == "absolute" else self.lam

    def as_dict(self) -> dict:
        return {
            "num_clients": self.num_clients,
            "request_range": list(self.request_range),
            "horizon": self.horizon,
            "seed": self.seed,
            "size": self.size,
            "arrival_mode": self.arrival_mode,
            "arrival_scale_s": self.scale_s,
            "start_offset_max": self.start_offset_max,
            "lambda": self.lam,
        }


def _client_name(i: int, width: int) -> str:
    return f"c{i:0{width}d}"


def _truncated_exp(rng: np.random.Generator, scale: float, span: float, n: int) -> np.ndarray:
    """n draws from Exponential(scale) conditioned on [0, span], via inverse CDF."""
    if n == 0:
        return np.empty(0)
    if scale <= 0:
        return np.zeros(n)
    u = rng.random(n)
    mass = 1.0 - math.exp(-span / scale)
    return -scale * np.log1p(-u * mass)


def gen_synthetic(config: SynthConfig) -> TraceDataset:
    """Generate a synthetic trace; a pure function of ``config``."""
    rng = np.random.default_rng(config.seed)
    n = config.num_clients
    counts = 1 + rng.poisson(config.lam, size=n)

    if config.size is not None:
        total = int(counts.sum())
        while total > config.size:
            idx = int(rng.integers(n))
            if counts[idx] > 1:
                counts[idx] -= 1
                total -= 1
        while total < config.size:
            counts[int(rng.integers(n))] += 1
            total += 1

    width = max(2, len(str(n - 1)))
    requests: list[Request] = []
    for i in range(n):
        cid = _client_name(i, width)
        count = int(counts[i])
        if config.arrival_mode == "wrapped":
            phase = float(rng.uniform(0.0, config.horizon))
            gaps = rng.exponential(config.scale_s, size=count) if config.scale_s > 0 else np.zeros(count)
            arrivals = np.sort(np.mod(phase + np.cumsum(gaps), config.horizon))
        elif config.arrival_mode == "absolute":
            start = min(float(rng.uniform(0.0, config.start_offset_max)), config.horizon)
            draws = _truncated_exp(rng, config.scale_s, config.horizon - start, count)
            arrivals = np.sort(start + draws)
        else:
            start = min(float(rng.uniform(0.0, config.start_offset_max)), config.horizon)
            gaps = rng.exponential(config.scale_s, size=count) if config.scale_s > 0 else np.zeros(count)
            arrivals = start + np.cumsum(gaps)
            arrivals = arrivals[arrivals <= config.horizon]
            if len(arrivals) == 0:
                # every client keeps at least its assigned first request
                arrivals = np.array([min(start, config.horizon)])
        payload = rng.integers(0, _PAYLOAD_MAX, size=(len(arrivals), 2))
        for seq, t in enumerate(arrivals):
            requests.append(
                Request(cid, seq, float(t), (int(payload[seq, 0]), int(payload[seq, 1])))
            )

    requests.sort(key=lambda r: (r.arrival_time, r.client_id, r.seq))
    last = max((r.arrival_time for r in requests), default=0.0)
    label = f"synth{n}-{len(requests)}"
    ds = TraceDataset(requests, n, last, label, meta={"config": config.as_dict()})
    validate(ds)
    return ds


def parse_access_log(path: str) -> list[tuple[str, float]]:
    """Read ``timestamp_iso8601,ip`` lines into (ip, epoch_seconds) events.

    Invalid lines are counted and reported via a warning; more than 10% of
    them is a format error. Naive timestamps are taken as UTC.
    """
    events: list[tuple[str, float]] = []
    invalid = 0
    considered = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            considered += 1
            parts = line.split(",")
            if len(parts) != 2:
                invalid += 1
                continue
            stamp, ip = parts[0].strip(), parts[1].strip()
            try:
                dt = datetime.fromisoformat(stamp.replace("Z", "+00:00"))
            except ValueError:
                invalid += 1
                continue
            if not ip:
                invalid += 1
                continue
            if dt.tzinfo is None:
                dt = dt.replace(tzinfo=timezone.utc)
            events.append((ip, dt.timestamp()))
    if considered == 0:
        log.warning("access log %s is empty", path)
        return []
    if invalid > 0.10 * considered:
        raise LogFormatError(
            f"{invalid} of {considered} lines unparseable; expected timestamp_iso8601,ip"
        )
    if invalid:
        log.warning("access log %s: skipped %d invalid of %d lines", path, invalid, considered)
    return events


def build_real_dataset(
    events: list[tuple[str, float]], size: int, seed: int = 0, skip: int = 0, label: str = ""
) -> TraceDataset:
    """Trace from the first ``size`` events (after ``skip``) ordered by time.

    Timestamps are rebased to zero, IPs map to dense user ids in order of
    first appearance, and equal-IP events keep their input order.
    """
    if len(events) < skip + size:
        raise ValueError(f"need {skip + size} events, log has {len(events)}")
    window = sorted(enumerate(events), key=lambda kv: (kv[1][1], kv[0]))[skip : skip + size]
    t0 = window[0][1][1]
    rng = np.random.default_rng(seed)
    payload = rng.integers(0, _PAYLOAD_MAX, size=(size, 2))
    users: dict[str, str] = {}
    seqs: dict[str, int] = {}
    requests: list[Request] = []
    for row, (_, (ip, ts)) in enumerate(window):
        if ip not in users:
            users[ip] = f"u{len(users):03d}"
        cid = users[ip]
        seq = seqs.get(cid, 0)
        seqs[cid] = seq + 1
        requests.append(
            Request(cid, seq, ts - t0, (int(payload[row, 0]), int(payload[row, 1])))
        )
    requests.sort(key=lambda r: (r.arrival_time, r.client_id, r.seq))
    ds = TraceDataset(
        requests,
        len(users),
        requests[-1].arrival_time,
        label or f"real-{size}",
        meta={"source_events": len(events), "skip": skip, "seed": seed},
    )
    validate(ds)
    return ds


def validate(ds: TraceDataset) -> None:
    """Check per-client seq contiguity and nondecreasing arrivals."""
    for cid, reqs in ds.by_client().items():
        for j, r in enumerate(reqs):
            if r.seq != j:
                raise ValueError(f"client {cid}: seq gap at {r.seq} (expected {j})")
            if j and r.arrival_time < reqs[j - 1].arrival_time:
                raise ValueError(f"client {cid}: arrival regressed at seq {r.seq}")


def dumps_dataset(ds: TraceDataset) -> str:
    header = {
        "version": DATASET_VERSION,
        "label": ds.label,
        "user_count": ds.user_count,
        "last_timestamp": ds.last_timestamp,
        **ds.meta,
    }
    buf = io.StringIO()
    buf.write(f"{DATASET_MAGIC} v{DATASET_VERSION} {json.dumps(header, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for r in ds.requests:
        writer.writerow([r.client_id, r.seq, repr(r.arrival_time), r.payload[0], r.payload[1]])
    return buf.getvalue()


def save_dataset(ds: TraceDataset, path: str) -> str:
    """Write the dataset; returns its content hash."""
    text = dumps_dataset(ds)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode()).hexdigest()


def loads_dataset(text: str) -> TraceDataset:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(DATASET_MAGIC):
        raise DatasetFormatError("line 1: missing dataset header")
    try:
        _, version_tag, meta_json = lines[0].split(" ", 2)
        header = json.loads(meta_json)
    except (ValueError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"line 1: bad header ({exc})") from None
    if version_tag != f"v{DATASET_VERSION}" or header.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"line 1: unsupported dataset version {version_tag}")
    requests: list[Request] = []
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row:
            continue
        try:
            cid, seq, arrival, a, b = row
            requests.append(Request(cid, int(seq), float(arrival), (int(a), int(b))))
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from None
    user_count = header.get("user_count", len({r.client_id for r in requests}))
    last = header.get("last_timestamp", max((r.arrival_time for r in requests), default=0.0))
    meta = {k: v for k, v in header.items() if k not in ("version", "label", "user_count", "last_timestamp")}
    ds = TraceDataset(requests, user_count, last, header.get("label", ""), meta)
    validate(ds)
    return ds


def load_dataset(path: str) -> tuple[TraceDataset, str]:
    """Read a dataset file; returns (dataset, content hash)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads_dataset(text), hashlib.sha256(text.encode()).hexdigest()
