import numpy as np

from throttlekit.oracle import ProblemInstance


def random_tiny_instance(rng: np.random.Generator) -> ProblemInstance:
    """Desk-scale scheduling instance: <= 3 users, <= 6 requests, T_max <= 10."""
    users = int(rng.integers(1, 4))
    total = int(rng.integers(1, 7))
    t_max = int(rng.integers(2, 11))
    counts = np.zeros(users, dtype=int)
    for _ in range(total):
        counts[int(rng.integers(users))] += 1
    arrivals = {}
    for u in range(users):
        if counts[u] == 0:
            continue
        times = np.sort(rng.uniform(0.0, t_max * 0.7, size=counts[u]))
        arrivals[f"u{u}"] = [float(t) for t in times]
    if not arrivals:
        arrivals = {"u0": [0.0]}
    capacity = float(rng.integers(1, 4))
    rate = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
    return ProblemInstance(capacity=capacity, rate=rate, t_max=t_max, arrivals=arrivals)
