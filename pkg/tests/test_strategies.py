import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from throttlekit.strategies import (
    AatbParams,
    AdaptiveTokenBucket,
    AssistedAdaptiveTokenBucket,
    AtbParams,
    BackoffParams,
    UnlimitedBackoff,
    WindowedBackoff,
)
from throttlekit.telemetry import TelemetryChannel, TelemetrySnapshot


class ScriptedRng:
    """Returns scripted values for uniform(); complains when exhausted."""

    def __init__(self, values):
        self.values = list(values)

    def uniform(self, lo=0.0, hi=1.0):
        if not self.values:
            raise AssertionError("rng script exhausted")
        v = self.values.pop(0)
        assert lo - 1e-9 <= v <= hi + 1e-9, f"scripted {v} outside [{lo}, {hi}]"
        return v


class FixedChannel(TelemetryChannel):
    def __init__(self, snapshot):
        self.snapshot = snapshot
        self.reports = []

    def exchange(self, report):
        self.reports.append(report)
        return self.snapshot


def make_ub(cap=32.0, waits=(), mode="double"):
    rng = ScriptedRng([cap, *waits])
    return UnlimitedBackoff(BackoffParams(mode=mode), rng)


class TestUnlimitedBackoff:
    def test_first_reject_draws_below_one_then_doubles(self):
        ub = make_ub(cap=32.0, waits=[0.4])
        ub.on_reject(10.0)
        assert ub.not_before == pytest.approx(10.4)
        assert ub.upper_bound == 2.0

    def test_bound_sequence_doubles_to_cap(self):
        ub = make_ub(cap=32.0, waits=[0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 30.0])
        bounds = []
        for _ in range(7):
            bounds.append(ub.upper_bound)
            ub.on_reject(0.0)
        assert bounds == [1, 2, 4, 8, 16, 32, 32]

    def test_cap_clamp(self):
        ub = make_ub(cap=32.0, waits=[20.0])
        ub.upper_bound = 32.0
        ub.on_reject(0.0)
        assert ub.upper_bound == 32.0

    def test_success_resets_for_next_request(self):
        ub = make_ub(cap=32.0, waits=[0.9])
        ub.on_reject(5.0)
        ub.on_success(6.0)
        assert ub.upper_bound == 1.0
        assert ub.acquire(7.0) == 7.0

    def test_acquire_waits_out_backoff(self):
        ub = make_ub(cap=32.0, waits=[0.7])
        ub.on_reject(2.0)
        assert ub.acquire(2.1) == pytest.approx(2.7)
        assert ub.acquire(3.0) == 3.0

    def test_seeded_rejects_respect_doubling_law(self):
        rng = np.random.default_rng(7)
        ub = UnlimitedBackoff(BackoffParams(), rng)
        ub0 = ub.params.initial_bound
        for _ in range(12):
            ub.on_reject(0.0)
        for k, (bound, wait) in enumerate(ub.wait_log):
            assert bound == pytest.approx(min(2**k * ub0, ub.cap))
            assert 0.0 <= wait < bound

    def test_fresh_mode_redraws_bound_each_time(self):
        rng = ScriptedRng([32.0, 31.0, 15.0, 33.5, 2.0])
        ub = UnlimitedBackoff(BackoffParams(mode="fresh"), rng)
        ub.on_reject(0.0)
        ub.on_reject(0.0)
        assert [b for b, _ in ub.wait_log] == [31.0, 33.5]
        assert ub.upper_bound == 1.0  # doubling state untouched


class TestWindowedBackoff:
    def make(self, w, attempts):
        wb = WindowedBackoff(BackoffParams(), w, ScriptedRng([32.0]))
        wb.attempt_log = list(attempts)
        return wb

    def test_full_window_waits_for_oldest_to_leave(self):
        wb = self.make(4, [0.0, 10.0, 20.0, 30.0])
        assert wb.acquire(40.0) == pytest.approx(60.0)

    def test_under_limit_sends_now(self):
        wb = self.make(4, [0.0, 10.0, 20.0])
        assert wb.acquire(40.0) == 40.0
        assert wb.attempt_log[-1] == 40.0

    def test_single_slot_boundary(self):
        wb = self.make(1, [59.9])
        assert wb.acquire(60.0) == pytest.approx(119.9)

    def test_backoff_and_window_compose(self):
        wb = self.make(2, [0.0, 1.0])
        wb.not_before = 30.0
        # backoff expires at 30, but the window (2nd-newest attempt at 0
        # plus 60 s) holds the send until 60
        assert wb.acquire(5.0) == pytest.approx(60.0)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=5.0, allow_nan=False), max_size=80),
        st.integers(min_value=1, max_value=6),
    )
    @settings(max_examples=150, deadline=None)
    def test_no_sixty_second_interval_exceeds_w(self, gaps, w):
        wb = WindowedBackoff(BackoffParams(), w, ScriptedRng([32.0]))
        now = 0.0
        for gap in gaps:
            now += gap
            ready = wb.acquire(now)
            if ready > now:
                now = ready
                assert wb.acquire(now) == now
        log = wb.attempt_log
        for t in log:
            in_window = [s for s in log if t - 60.0 < s <= t]
            assert len(in_window) <= w


def make_atb(rate_pm=15.0, tokens=1.0, congestion_pm=30.0, bucket=15.0,
             alpha=1.2, beta=1.2, rng=None, start=0.0):
    params = AtbParams(
        bucket_size=bucket,
        initial_rate_pm=rate_pm,
        initial_congestion_pm=congestion_pm,
        initial_tokens=tokens,
        alpha=alpha,
        beta=beta,
    )
    return AdaptiveTokenBucket(params, rng or ScriptedRng([]), start_time=start)


class TestAdaptiveTokenBucket:
    def test_increase_below_congestion_uses_alpha(self):
        atb = make_atb(rate_pm=10.0, congestion_pm=30.0)
        atb.on_success(0.0)
        assert atb.rate_pm == pytest.approx(12.0)  # max(10.6, 12)

    def test_increase_at_or_above_congestion_uses_beta(self):
        atb = make_atb(rate_pm=40.0, congestion_pm=30.0)
        atb.on_success(0.0)
        assert atb.rate_pm == pytest.approx(48.0)  # max(40.6, 48)

    def test_increase_additive_floor_dominates_at_low_rate(self):
        atb = make_atb(rate_pm=1.0, congestion_pm=30.0)
        atb.on_success(0.0)
        assert atb.rate_pm == pytest.approx(1.6)  # max(1.6, 1.2)

    def test_decrease_halves_and_records_congestion(self):
        atb = make_atb(rate_pm=20.0, rng=ScriptedRng([0.3]))
        atb.on_reject(0.0)
        assert atb.last_congestion_pm == pytest.approx(20.0)
        assert atb.rate_pm == pytest.approx(10.0)  # rate/2 dominates any u
        assert atb.bucket.tokens == 0.0

    def test_decrease_sigma_floor_dominates_at_low_rate(self):
        atb = make_atb(rate_pm=1.0, rng=ScriptedRng([0.5]))
        atb.on_reject(0.0)
        assert atb.rate_pm == pytest.approx(1.1)  # sigma 0.6 + u 0.5

    def test_decrease_invariants_hold_for_seeded_draws(self):
        rng = np.random.default_rng(3)
        atb = make_atb(rate_pm=37.0, rng=rng)
        for _ in range(20):
            before = atb.rate_pm
            atb.on_reject(0.0)
            assert atb.bucket.tokens == 0.0
            assert atb.rate_pm >= max(atb.params.sigma_pm - 0.5, before / 2.0) - 1e-9
            atb.on_success(0.0)
            assert atb.rate_pm >= atb.params.sigma_pm - 0.5

    def test_success_grows_by_at_least_delta(self):
        atb = make_atb(rate_pm=5.0)
        atb.on_success(0.0)
        assert atb.rate_pm >= 5.0 + atb.params.delta_pm - 1e-9

    def test_acquire_with_token_is_immediate(self):
        atb = make_atb(tokens=1.5)
        assert atb.acquire(0.0) == 0.0
        assert atb.bucket.tokens == pytest.approx(0.5)

    def test_acquire_partial_token_waits(self):
        atb = make_atb(tokens=0.9, rate_pm=15.0)
        atb.bucket.rate = 0.25  # 0.25 tokens/s
        ready = atb.acquire(0.0)
        assert ready == pytest.approx(0.4)  # (1 - 0.9) / 0.25
        assert atb.acquire(ready) == ready

    def test_acquire_empty_bucket_at_fifteen_per_minute(self):
        atb = make_atb(tokens=0.0, rate_pm=15.0)
        assert atb.acquire(0.0) == pytest.approx(4.0)  # 60 / 15

    def test_refill_respects_rate_change_boundaries(self):
        # tokens accrued before a rate change use the old rate
        atb = make_atb(rate_pm=60.0, tokens=0.0)  # 1 token/s
        atb.bucket.set_rate(10.0, 2.0)  # after 10 s at 1/s
        assert atb.bucket.tokens == pytest.approx(10.0)
        atb.bucket.refill(11.0)
        assert atb.bucket.tokens == pytest.approx(12.0)


def make_aatb(rate_pm=15.0, tokens=1.0, channel=None, rng=None, omega=30.0,
              alpha=1.4, beta=1.2, start=0.0, limiter_pm=80.0):
    params = AatbParams(
        bucket_size=15.0,
        initial_rate_pm=rate_pm,
        initial_congestion_pm=30.0,
        initial_tokens=tokens,
        alpha=alpha,
        beta=beta,
        omega=omega,
    )
    return AssistedAdaptiveTokenBucket(
        params,
        rng or ScriptedRng([]),
        client_id="c0",
        channel=channel,
        limiter_rate_default_pm=limiter_pm,
        start_time=start,
    )


class TestAssistedAdaptiveTokenBucket:
    def test_routine_low_load_grows_with_alpha(self):
        snap = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=0)
        aatb = make_aatb(rate_pm=10.0, channel=FixedChannel(snap))
        aatb.last_rate_change = -100.0
        for t in (-20.0, -10.0, -5.0, -2.0, -1.0):
            aatb._sends.append(t + 30.0)  # own load 5 inside the window at now=30
        aatb.on_snapshot(snap, 30.0)
        # avg load 10, own 5 < 7.5 -> alpha branch: max(14, 10.6)
        assert aatb.rate_pm == pytest.approx(14.0)

    def test_routine_high_load_grows_with_beta(self):
        snap = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=0)
        aatb = make_aatb(rate_pm=10.0)
        aatb.last_rate_change = -100.0
        aatb._sends.extend([29.0] * 9)
        aatb.on_snapshot(snap, 30.0)
        assert aatb.rate_pm == pytest.approx(12.0)  # max(12, 10.6)

    def test_routine_congestion_backs_off_one_interval(self):
        snap = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=2)
        aatb = make_aatb(rng=ScriptedRng([-1.5]), omega=30.0)
        aatb.on_snapshot(snap, 100.0)
        assert aatb.next_acquire == pytest.approx(128.5)
        assert 100.0 + 28.0 <= aatb.next_acquire <= 100.0 + 32.0

    def test_routine_guard_blocks_rate_change(self):
        snap = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=0)
        aatb = make_aatb(rate_pm=10.0)
        aatb.last_rate_change = 90.0
        aatb.on_snapshot(snap, 100.0)  # only 10 s since the last change
        assert aatb.rate_pm == pytest.approx(10.0)

    def test_missing_snapshot_is_noop_for_routine(self):
        aatb = make_aatb(rate_pm=10.0)
        aatb.last_rate_change = -100.0
        aatb.on_snapshot(None, 30.0)
        assert aatb.rate_pm == pytest.approx(10.0)
        assert aatb.next_acquire == float("-inf")

    def test_congestion_wait_scales_with_reported_count(self):
        snap = TelemetrySnapshot(
            active_clients=5, total_requests=50, reported_429=3, limiter_rate=80.0
        )
        aatb = make_aatb(rate_pm=15.0, channel=FixedChannel(snap), rng=ScriptedRng([0.5]))
        aatb._sends.extend([9.0] * 10)
        aatb.on_reject(10.0)
        # 3 / (80/60) = 2.25, plus u in [0, 1)
        assert aatb.next_acquire == pytest.approx(10.0 + 2.25 + 0.5)
        assert 10.0 + 2.25 <= aatb.next_acquire <= 10.0 + 3.25
        assert aatb.bucket.tokens == pytest.approx(1.1)

    def test_congestion_light_load_halves(self):
        snap = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=1)
        aatb = make_aatb(rate_pm=12.0, channel=FixedChannel(snap), rng=ScriptedRng([0.0]))
        aatb._sends.extend([9.5, 9.8])  # own load 2 < 0.5 * avg 10
        aatb.on_reject(10.0)
        assert aatb.rate_pm == pytest.approx(6.0)

    def test_congestion_heavy_load_drops_to_third_with_sigma_floor(self):
        snap = TelemetrySnapshot(active_clients=5, total_requests=50, reported_429=1)
        aatb = make_aatb(rate_pm=1.0, channel=FixedChannel(snap), rng=ScriptedRng([0.0]))
        aatb._sends.extend([9.0] * 10)  # own load 10 >= 0.5 * avg
        aatb.on_reject(10.0)
        assert aatb.rate_pm == pytest.approx(0.6)  # max(0.6, 1/3)

    def test_congestion_without_snapshot_falls_back_to_atb(self):
        aatb = make_aatb(rate_pm=20.0, channel=None, rng=ScriptedRng([0.0]), omega=30.0)
        aatb._sends.append(9.9)
        aatb.on_reject(10.0)
        assert aatb.rate_pm == pytest.approx(10.0)  # plain halving
        assert aatb.bucket.tokens == 0.0
        assert aatb.next_acquire == pytest.approx(40.0)  # now + omega

    def test_acquire_gated_by_next_acquire(self):
        aatb = make_aatb(tokens=1.5)
        aatb.next_acquire = 5.0
        assert aatb.acquire(0.0) == 5.0
        assert aatb.bucket.tokens == pytest.approx(1.5)  # nothing consumed yet

    def test_acquire_gated_by_tokens(self):
        aatb = make_aatb(tokens=0.0)
        aatb.bucket.rate = 0.5
        aatb.next_acquire = float("-inf")
        assert aatb.acquire(0.0) == pytest.approx(2.0)

    def test_acquire_immediate_when_both_satisfied(self):
        aatb = make_aatb(tokens=1.2)
        aatb.next_acquire = float("-inf")
        assert aatb.acquire(3.0) == 3.0
        # 1.2 initial + 3 s refill at 15/min, minus the consumed token
        assert aatb.bucket.tokens == pytest.approx(0.95)

    def test_success_never_changes_rate(self):
        aatb = make_aatb(rate_pm=15.0)
        aatb.on_success(1.0)
        assert aatb.rate_pm == pytest.approx(15.0)

    def test_next_acquire_is_monotone(self):
        big = TelemetrySnapshot(active_clients=10, total_requests=100, reported_429=9,
                                limiter_rate=80.0)
        aatb = make_aatb(rate_pm=15.0, channel=FixedChannel(big),
                         rng=ScriptedRng([0.9, -1.9]))
        aatb._sends.append(0.9)
        aatb.on_reject(1.0)  # wait 9/(4/3) = 6.75 + 0.9 -> next_acquire 8.65
        first = aatb.next_acquire
        assert first == pytest.approx(8.65)
        aatb.last_reported_congestion = -100.0
        small = TelemetrySnapshot(active_clients=10, total_requests=100, reported_429=1)
        aatb.on_snapshot(small, 2.0)  # 2 + 30 - 1.9 = 30.1 > 8.65, moves forward
        assert aatb.next_acquire >= first

    def test_tick_respects_congestion_guard_and_counts_messages(self):
        snap = TelemetrySnapshot(active_clients=1, total_requests=0, reported_429=0)
        channel = FixedChannel(snap)
        aatb = make_aatb(channel=channel, omega=30.0)
        aatb.last_reported_congestion = 80.0
        assert aatb.on_tick(100.0) is False  # 20 s since congestion < omega
        assert aatb.update_messages == 0
        assert aatb.on_tick(110.0) is True
        assert aatb.update_messages == 1
        assert len(channel.reports) == 1

    def test_report_windows_track_own_traffic(self):
        snap = TelemetrySnapshot(active_clients=1, total_requests=0, reported_429=0)
        channel = FixedChannel(snap)
        aatb = make_aatb(channel=channel, omega=30.0, rng=ScriptedRng([0.0]), tokens=5.0)
        for t in (1.0, 5.0, 20.0, 41.0):
            assert aatb.acquire(t) == t
        aatb.on_reject(41.0)
        report = channel.reports[-1]
        assert report.window_requests == 2  # sends at 20 and 41 inside (11, 41]
        assert report.got_429 == 1
