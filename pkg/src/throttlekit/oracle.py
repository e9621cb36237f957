"""Offline scheduling reference for token-bucket admission.

Given full knowledge of all arrivals, find integer service slots that minimize
total response time subject to:

  (1) each request served exactly once, no earlier than its arrival ceiling;
  (2) per-user FIFO order;
  (3) per-slot service totals Z_t;
  (4) token dynamics y_t = min(y_{t-1} - Z_t + r, B) with y_t >= 0, where
      slot 0 draws from the initial B tokens and y_0 = B - Z_0;
  (5) service slots consistent with the per-slot indicators.

Arrivals are real-valued; constraints use ceil(A) while the objective uses the
raw arrival, so a request served at its arrival ceiling still pays the
fractional wait. ``solve_greedy`` admits pending requests in nondecreasing
arrival order (ties: user id, then seq) up to the available tokens each slot;
``solve_exhaustive`` finds the exact optimum for desk-scale instances by
enumerating per-slot service vectors with memoization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

from .workload import TraceDataset

INSTANCE_MAGIC = "#throttlekit-instance"
INSTANCE_VERSION = 1

# solve_exhaustive refuses anything past desk scale
EXHAUSTIVE_MAX_REQUESTS = 8
EXHAUSTIVE_MAX_SLOTS = 12

_EPS = 1e-9


class InfeasibleInstanceError(ValueError):
    """No schedule fits in the horizon; carries the earliest sufficient T_max."""

    def __init__(self, message: str, earliest_t_max: int | None = None) -> None:
        super().__init__(message)
        self.earliest_t_max = earliest_t_max


class InstanceTooLargeError(ValueError):
    """solve_exhaustive guard tripped."""


@dataclass
class ProblemInstance:
    capacity: float  # B: bucket capacity and initial tokens
    rate: float  # r: tokens per slot
    t_max: int
    arrivals: dict[str, list[float]]  # per user, nondecreasing
    slot_width: float = 1.0

    def __post_init__(self) -> None:
        if self.capacity < 1 or self.rate < 0 or self.t_max < 0:
            raise ValueError("need capacity >= 1, rate >= 0, t_max >= 0")
        for user, times in self.arrivals.items():
            for j in range(1, len(times)):
                if times[j] < times[j - 1]:
                    raise ValueError(f"user {user}: arrivals must be nondecreasing")

    @property
    def total_requests(self) -> int:
        return sum(len(v) for v in self.arrivals.values())

    def users(self) -> list[str]:
        return sorted(self.arrivals)


@dataclass
class Schedule:
    slots: dict[str, list[int]]  # x_{i,j}, aligned with instance arrivals

    def per_slot_totals(self, t_max: int) -> list[int]:
        z = [0] * (t_max + 1)
        for user_slots in self.slots.values():
            for s in user_slots:
                if 0 <= s <= t_max:
                    z[s] += 1
        return z

    def token_trajectory(self, instance: ProblemInstance) -> list[float]:
        z = self.per_slot_totals(instance.t_max)
        y = [instance.capacity - z[0]]
        for t in range(1, instance.t_max + 1):
            y.append(min(y[-1] - z[t] + instance.rate, instance.capacity))
        return y


def check_feasible(instance: ProblemInstance, schedule: Schedule) -> tuple[bool, str | None]:
    """Validate a schedule; returns (ok, first violated constraint name)."""
    if set(schedule.slots) != set(instance.arrivals) or any(
        len(schedule.slots[u]) != len(instance.arrivals[u]) for u in instance.arrivals
    ):
        raise ValueError("schedule dimensions do not match instance")
    for user in instance.users():
        arrivals = instance.arrivals[user]
        slots = schedule.slots[user]
        for j, (a, s) in enumerate(zip(arrivals, slots)):
            if not isinstance(s, int) or s < math.ceil(a) or s > instance.t_max:
                return False, "constraint_1"
            if j and s < slots[j - 1]:
                return False, "constraint_2"
    y = schedule.token_trajectory(instance)
    for t, val in enumerate(y):
        if val < -_EPS:
            return False, "constraint_4"
    return True, None


def objective(instance: ProblemInstance, schedule: Schedule) -> float:
    """Total response time sum(x - A) of a (feasible) schedule."""
    total = 0.0
    for user in instance.users():
        for a, s in zip(instance.arrivals[user], schedule.slots[user]):
            total += s - a
    return total


def _pending_order(instance: ProblemInstance) -> list[tuple[float, str, int, int]]:
    """(arrival, user, seq, ceil_arrival), sorted in service priority order."""
    items = []
    for user in instance.users():
        for j, a in enumerate(instance.arrivals[user]):
            items.append((a, user, j, math.ceil(a)))
    items.sort(key=lambda it: (it[0], it[1], it[2]))
    return items


def solve_greedy(instance: ProblemInstance) -> Schedule:
    """Serve pending requests earliest-arrival-first, as many per slot as tokens allow.

    Slot t offers y_{t-1} + r tokens (the capacity cap binds only the
    end-of-slot leftover); slot 0 offers the initial B.
    """
    order = _pending_order(instance)
    slots: dict[str, list[int]] = {u: [0] * len(instance.arrivals[u]) for u in instance.arrivals}
    n = len(order)
    idx = 0
    y = 0.0
    t = 0
    while idx < n:
        avail = instance.capacity if t == 0 else y + instance.rate
        budget = int(math.floor(avail + _EPS))
        k = 0
        while budget > 0 and idx < n and order[idx][3] <= t:
            _, user, j, _ = order[idx]
            slots[user][j] = t
            idx += 1
            budget -= 1
            k += 1
        y = (avail - k) if t == 0 else min(avail - k, instance.capacity)
        if idx >= n:
            break
        t += 1
        if t > instance.t_max:
            # keep simulating to report how much horizon would have sufficed
            unserved = n - idx
            t_need = t
            while idx < n:
                avail = y + instance.rate
                budget = int(math.floor(avail + _EPS))
                served_here = 0
                while budget > 0 and idx < n and order[idx][3] <= t_need:
                    idx += 1
                    budget -= 1
                    avail -= 1
                    served_here += 1
                y = min(avail, instance.capacity)
                if idx >= n:
                    break
                if served_here == 0 and instance.rate <= 0 and order[idx][3] <= t_need:
                    # tokens can never accrue again: no horizon suffices
                    t_need = -1
                    break
                t_need += 1
            raise InfeasibleInstanceError(
                f"horizon t_max={instance.t_max} exhausted with {unserved} requests unserved",
                earliest_t_max=t_need if idx >= n and t_need >= 0 else None,
            )
    return Schedule(slots)


def solve_exhaustive(instance: ProblemInstance) -> Schedule:
    """Exact optimum by enumerating per-slot service vectors (guarded to desk scale)."""
    if instance.total_requests > EXHAUSTIVE_MAX_REQUESTS:
        raise InstanceTooLargeError(
            f"{instance.total_requests} requests > {EXHAUSTIVE_MAX_REQUESTS}"
        )
    if instance.t_max > EXHAUSTIVE_MAX_SLOTS:
        raise InstanceTooLargeError(f"t_max {instance.t_max} > {EXHAUSTIVE_MAX_SLOTS}")

    users = instance.users()
    arrivals = [instance.arrivals[u] for u in users]
    ceilings = [[math.ceil(a) for a in arr] for arr in arrivals]
    totals = tuple(len(arr) for arr in arrivals)

    @lru_cache(maxsize=None)
    def best(t: int, counts: tuple[int, ...], tokens_key: float) -> tuple[float, tuple[int, ...] | None]:
        """Min remaining cost from slot t onward; returns (cost, service vector at t)."""
        if counts == totals:
            return 0.0, None
        if t > instance.t_max:
            return math.inf, None
        avail = instance.capacity if t == 0 else tokens_key + instance.rate
        # max serveable per user this slot: next requests whose ceiling has passed
        limits = []
        for i, cnt in enumerate(counts):
            d = 0
            while cnt + d < totals[i] and ceilings[i][cnt + d] <= t:
                d += 1
            limits.append(d)
        budget = int(math.floor(avail + _EPS))
        best_cost, best_vec = math.inf, None
        for vec in product(*(range(d + 1) for d in limits)):
            k = sum(vec)
            if k > budget:
                continue
            step_cost = 0.0
            for i, d in enumerate(vec):
                for j in range(counts[i], counts[i] + d):
                    step_cost += t - arrivals[i][j]
            new_counts = tuple(c + d for c, d in zip(counts, vec))
            new_tokens = (instance.capacity - k) if t == 0 else min(
                tokens_key + instance.rate - k, instance.capacity
            )
            if new_tokens < -_EPS:
                continue
            sub_cost, _ = best(t + 1, new_counts, round(new_tokens, 9))
            if step_cost + sub_cost < best_cost - _EPS:
                best_cost, best_vec = step_cost + sub_cost, vec
        return best_cost, best_vec

    start_counts = tuple(0 for _ in users)
    cost, _ = best(0, start_counts, round(instance.capacity, 9))
    if math.isinf(cost):
        raise InfeasibleInstanceError(f"no feasible schedule within t_max={instance.t_max}")

    # walk the memoized decisions forward to materialize the schedule
    slots: dict[str, list[int]] = {u: [0] * len(instance.arrivals[u]) for u in users}
    counts = start_counts
    tokens = round(instance.capacity, 9)
    t = 0
    while counts != totals:
        _, vec = best(t, counts, tokens)
        assert vec is not None
        k = sum(vec)
        for i, d in enumerate(vec):
            for j in range(counts[i], counts[i] + d):
                slots[users[i]][j] = t
        counts = tuple(c + d for c, d in zip(counts, vec))
        tokens = round(
            (instance.capacity - k) if t == 0 else min(tokens + instance.rate - k, instance.capacity),
            9,
        )
        t += 1
    best.cache_clear()
    return Schedule(slots)


# -- instance construction and file I/O --------------------------------


def instance_from_dataset(
    ds: TraceDataset, capacity: float, rate_per_slot: float, t_max: int, slot_width: float = 1.0
) -> ProblemInstance:
    arrivals: dict[str, list[float]] = {}
    for r in ds.requests:
        arrivals.setdefault(r.client_id, []).append(r.arrival_time / slot_width)
    for times in arrivals.values():
        times.sort()
    return ProblemInstance(capacity, rate_per_slot, t_max, arrivals, slot_width)


def save_instance(instance: ProblemInstance, path: str) -> None:
    header = {
        "version": INSTANCE_VERSION,
        "B": instance.capacity,
        "r": instance.rate,
        "T_max": instance.t_max,
        "slot_width": instance.slot_width,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{INSTANCE_MAGIC} v{INSTANCE_VERSION} {json.dumps(header, sort_keys=True)}\n")
        for user in instance.users():
            for j, a in enumerate(instance.arrivals[user]):
                fh.write(f"{user},{j},{a!r},0,0\n")


def load_instance(path: str) -> ProblemInstance:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(INSTANCE_MAGIC):
        raise ValueError("line 1: missing instance header")
    _, version_tag, meta_json = lines[0].split(" ", 2)
    if version_tag != f"v{INSTANCE_VERSION}":
        raise ValueError(f"unsupported instance version {version_tag}")
    header = json.loads(meta_json)
    arrivals: dict[str, list[float]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            user, _seq, arrival = line.split(",")[:3]
            arrivals.setdefault(user, []).append(float(arrival))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    for times in arrivals.values():
        times.sort()
    return ProblemInstance(
        capacity=float(header["B"]),
        rate=float(header["r"]),
        t_max=int(header["T_max"]),
        arrivals=arrivals,
        slot_width=float(header.get("slot_width", 1.0)),
    )


def solve_to_json(instance: ProblemInstance, exact: bool = False) -> dict:
    """CLI-facing wrapper: solve and render a JSON-ready result."""
    try:
        schedule = solve_exhaustive(instance) if exact else solve_greedy(instance)
    except InfeasibleInstanceError as exc:
        return {
            "feasible": False,
            "objective": None,
            "schedule": None,
            "earliest_sufficient_t_max": exc.earliest_t_max,
        }
    ok, violation = check_feasible(instance, schedule)
    return {
        "feasible": ok,
        "violation": violation,
        "objective": objective(instance, schedule),
        "schedule": {u: schedule.slots[u] for u in sorted(schedule.slots)},
    }
