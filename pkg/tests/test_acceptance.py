"""Acceptance suite: one test per shipping criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass line per
criterion. The statistical reproductions (criteria 3 and 4) use the virtual
clock, thirty repetitions, and the shipped scenario profiles.
"""

import os
import time

import numpy as np
import pytest

from conftest import random_tiny_instance
from throttlekit.emulator import ExperimentConfig, run_experiment
from throttlekit.gateway import GatewayConfig, GatewayServer
from throttlekit.oracle import (
    InfeasibleInstanceError,
    check_feasible,
    objective,
    solve_exhaustive,
    solve_greedy,
)
from throttlekit.strategies import AssistedAdaptiveTokenBucket, BackoffParams, UnlimitedBackoff
from throttlekit.telemetry import TelemetryReport, TelemetryServer, UdpChannel
from throttlekit.workload import parse_access_log, build_real_dataset

DATA = os.path.join(os.path.dirname(__file__), "data")
RUNS = 30
SEED = 42
DATASET_SEED = 0


def _ok(criterion: str, detail: str) -> None:
    print(f"\n[ACCEPTANCE] {criterion}: PASS ({detail})")


def _experiment(profile, strategy, size, runs=RUNS, **kw):
    cfg = ExperimentConfig(strategy=strategy, profile=profile, size=size, runs=runs,
                           seed=SEED, dataset_seed=DATASET_SEED, clock="virtual", **kw)
    return run_experiment(cfg)


@pytest.fixture(scope="module")
def synth5_results():
    return {s: _experiment("synth5", s, 800) for s in ("ub", "atb", "aatb")}


@pytest.fixture(scope="module")
def synth100_results():
    at_800 = {s: _experiment("synth100", s, 800) for s in ("ub", "wb", "atb", "aatb")}
    at_500 = {s: _experiment("synth100", s, 500) for s in ("ub", "wb")}
    return at_800, at_500


def _mean(result, metric):
    return result.summary.stats[metric][0]


def _reduction(results, strategy, baseline="ub"):
    base = _mean(results[baseline], "total_429")
    return 100.0 * (base - _mean(results[strategy], "total_429")) / base


def _duration_increase(results, strategy, baseline="ub"):
    base = _mean(results[baseline], "total_duration")
    return 100.0 * (_mean(results[strategy], "total_duration") - base) / base


def test_c1_limiter_budget_exact():
    start = time.perf_counter()
    cfg = ExperimentConfig(strategy="ub", profile="synth5", size=800, runs=1,
                           seed=SEED, dataset_seed=DATASET_SEED, clock="virtual")
    res = run_experiment(cfg)
    run = res.runs[0]
    # every one of the >= 800 requests was offered inside the 300 s window
    assert len(run.requests) >= 800
    assert all(r.arrival <= 300.0 for r in run.requests)
    admits_in_window = sum(
        1 for r in run.requests if r.served - cfg.virtual_rtt / 2.0 <= 300.0
    )
    elapsed = time.perf_counter() - start
    assert admits_in_window <= 500
    assert elapsed < 5.0
    _ok("C1 limiter budget", f"{admits_in_window} <= 500 admitted in 300 s, {elapsed:.2f}s")


def test_c2_oracle_equivalence_exact():
    start = time.perf_counter()
    rng = np.random.default_rng(20240)
    checked = 0
    infeasible = 0
    for _ in range(200):
        inst = random_tiny_instance(rng)
        try:
            exact = solve_exhaustive(inst)
        except InfeasibleInstanceError:
            with pytest.raises(InfeasibleInstanceError):
                solve_greedy(inst)
            infeasible += 1
            continue
        greedy = solve_greedy(inst)
        ok_g, viol_g = check_feasible(inst, greedy)
        ok_e, viol_e = check_feasible(inst, exact)
        assert ok_g, f"greedy infeasible ({viol_g}) on {inst}"
        assert ok_e, f"exhaustive infeasible ({viol_e}) on {inst}"
        assert objective(inst, greedy) == pytest.approx(objective(inst, exact), abs=1e-9), (
            f"objectives diverge on {inst}"
        )
        checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    _ok("C2 oracle equivalence",
        f"{checked} instances matched, {infeasible} infeasible, {elapsed:.1f}s")


def test_c3_synth5_800_reproduction(synth5_results):
    start = time.perf_counter()
    atb_red = _reduction(synth5_results, "atb")
    aatb_red = _reduction(synth5_results, "aatb")
    atb_dur = _duration_increase(synth5_results, "atb")
    aatb_dur = _duration_increase(synth5_results, "aatb")
    assert atb_red >= 55.0
    assert aatb_red >= 85.0
    assert atb_dur <= 35.0
    assert aatb_dur <= 35.0
    # ordering: each refinement strictly improves on the last
    assert (_mean(synth5_results["aatb"], "total_429")
            < _mean(synth5_results["atb"], "total_429")
            < _mean(synth5_results["ub"], "total_429"))
    elapsed = time.perf_counter() - start
    assert elapsed < 180.0
    _ok("C3 synth5/800",
        f"ATB -{atb_red:.1f}% 429s (+{atb_dur:.1f}% duration), "
        f"AATB -{aatb_red:.1f}% (+{aatb_dur:.1f}%), {RUNS} runs")


def test_c4_synth100_reproduction(synth100_results):
    start = time.perf_counter()
    at_800, at_500 = synth100_results
    atb_red = _reduction(at_800, "atb")
    aatb_red = _reduction(at_800, "aatb")
    wb_800 = _reduction(at_800, "wb")
    wb_500 = _reduction(at_500, "wb")
    assert atb_red >= 75.0
    assert aatb_red >= 75.0
    assert _mean(at_500["ub"], "total_429") > 0  # the 500-request baseline is live
    assert wb_500 - wb_800 >= 30.0
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    _ok("C4 synth100",
        f"ATB -{atb_red:.1f}%, AATB -{aatb_red:.1f}%, "
        f"WB degraded {wb_500:.1f}% -> {wb_800:.1f}% ({wb_500 - wb_800:.1f} pp)")


def test_c5_aatb_message_budget(synth5_results):
    updates = _mean(synth5_results["aatb"], "update_messages")
    assert updates < 88.0
    # telemetry traffic never reaches the gateway's token ledger
    for run in synth5_results["aatb"].runs:
        attempts = sum(r.attempts for r in run.requests)
        assert run.gateway_admitted + run.gateway_rejected == attempts
        assert run.update_messages > 0
    gateway = GatewayServer(GatewayConfig(listen=("127.0.0.1", 0))).start()
    telemetry = TelemetryServer(listen=("127.0.0.1", 0)).start()
    try:
        channel = UdpChannel(telemetry.address, timeout=1.0)
        for i in range(50):
            assert channel.exchange(TelemetryReport(f"c{i}", 5, 1, time.monotonic()))
        channel.close()
        assert gateway.core.stats.admitted == 0
        assert gateway.core.stats.rejected == 0
    finally:
        telemetry.stop()
        gateway.stop()
    _ok("C5 AATB message budget", f"mean {updates:.1f} updates/run < 88; gateway untouched")


def test_c6_strategy_property_suites(synth5_results):
    # UB doubling law from a seeded reject storm
    rng = np.random.default_rng(SEED)
    ub = UnlimitedBackoff(BackoffParams(), rng)
    for _ in range(10):
        ub.on_reject(0.0)
    for k, (bound, wait) in enumerate(ub.wait_log):
        assert bound == pytest.approx(min(2.0**k * ub.params.initial_bound, ub.cap))
        assert 0.0 <= wait < bound

    # WB sliding window: exhaustive scan over a seeded contended run
    wb_res = _experiment("synth100", "wb", 500, runs=1)

    rng2 = np.random.default_rng(7)
    from throttlekit.strategies import WindowedBackoff

    wb = WindowedBackoff(BackoffParams(), 4, rng2)
    now = 0.0
    for _ in range(600):
        now += float(rng2.uniform(0.0, 6.0))
        ready = wb.acquire(now)
        if ready > now:
            now = ready
            assert wb.acquire(now) == now
        if rng2.uniform() < 0.5:
            wb.on_reject(now)
        else:
            wb.on_success(now)
    for t in wb.attempt_log:
        assert len([s for s in wb.attempt_log if t - 60.0 < s <= t]) <= 4

    # ATB decrease/increase algebra on the documented examples
    from throttlekit.strategies import AdaptiveTokenBucket, AtbParams

    class _U:
        def __init__(self, v):
            self.v = v

        def uniform(self, lo=0.0, hi=1.0):
            return self.v

    atb = AdaptiveTokenBucket(AtbParams(initial_rate_pm=10.0, initial_congestion_pm=30.0),
                              _U(0.0))
    atb.on_success(0.0)
    assert atb.rate_pm == pytest.approx(12.0)
    atb = AdaptiveTokenBucket(AtbParams(initial_rate_pm=40.0, initial_congestion_pm=30.0,
                                        bucket_size=40.0), _U(0.0))
    atb.on_success(0.0)
    assert atb.rate_pm == pytest.approx(48.0)
    atb = AdaptiveTokenBucket(AtbParams(initial_rate_pm=20.0), _U(0.3))
    atb.on_reject(0.0)
    assert atb.rate_pm == pytest.approx(10.0)
    assert atb.bucket.tokens == 0.0
    atb = AdaptiveTokenBucket(AtbParams(initial_rate_pm=1.0), _U(0.5))
    atb.on_reject(0.0)
    assert atb.rate_pm == pytest.approx(1.1)

    # AATB never sends before its acquire gate (seeded emulation event log)
    grants: list[tuple[float, float]] = []
    original = AssistedAdaptiveTokenBucket.acquire

    def logging_acquire(self, now):
        gate = self.next_acquire
        ready = original(self, now)
        if ready <= now:
            grants.append((now, gate))
        return ready

    AssistedAdaptiveTokenBucket.acquire = logging_acquire
    try:
        _experiment("synth5", "aatb", 300, runs=1)
    finally:
        AssistedAdaptiveTokenBucket.acquire = original
    assert grants
    assert all(now >= gate - 1e-9 for now, gate in grants)

    # FIFO completion order per client on the full synth5 logs
    for run in synth5_results["aatb"].runs[:3]:
        per_client: dict[str, list] = {}
        for rec in run.requests:
            per_client.setdefault(rec.client_id, []).append(rec)
        for recs in per_client.values():
            recs.sort(key=lambda r: r.seq)
            assert [r.served for r in recs] == sorted(r.served for r in recs)
    _ok("C6 strategy properties",
        f"UB doubling, WB window, ATB algebra, {len(grants)} gated AATB sends, FIFO")


def test_c7_determinism_byte_identical(tmp_path):
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    for out in (out_a, out_b):
        cfg = ExperimentConfig(strategy="aatb", profile="synth5", size=120, runs=2,
                               seed=SEED, dataset_seed=DATASET_SEED, clock="virtual",
                               out_dir=out)
        run_experiment(cfg)
    names_a = sorted(os.listdir(out_a))
    assert names_a == sorted(os.listdir(out_b))
    for name in names_a:
        with open(os.path.join(out_a, name), "rb") as fa, \
             open(os.path.join(out_b, name), "rb") as fb:
            assert fa.read() == fb.read(), f"{name} differs between identical runs"
    _ok("C7 determinism", f"{len(names_a)} archive files byte-identical")


def test_c8a_bundled_access_log_fixture():
    events = parse_access_log(os.path.join(DATA, "access_log_20.csv"))
    assert len(events) == 20
    assert len({ip for ip, _ in events}) == 3
    ds = build_real_dataset(events, size=20)
    assert ds.user_count == 3
    assert len(ds) == 20
    _ok("C8a real-trace fixture", "bundled 20-line log parses exactly")


def test_c8b_public_trace_reproduction():
    trace = os.environ.get("THROTTLEKIT_REAL_TRACE")
    if not trace:
        pytest.skip("public trace not supplied (set THROTTLEKIT_REAL_TRACE to enable)")
    events = parse_access_log(trace)
    expectations = {400: (18, 263.0), 800: (27, 433.0)}
    for size, (users, last) in expectations.items():
        ds = build_real_dataset(events, size=size)
        assert ds.user_count == users
        assert ds.last_timestamp == pytest.approx(last, abs=1.0)
    _ok("C8b public trace", "dataset shapes reproduced")
