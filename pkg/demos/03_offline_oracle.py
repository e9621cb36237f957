"""The offline scheduling oracle: how fast could requests have been served?

Given every arrival in advance, the oracle assigns integer service slots that
minimize total response time while respecting per-user FIFO order and the
token-bucket budget. The greedy solver handles experiment-scale instances;
the exhaustive solver certifies optimality at desk scale.
"""

from throttlekit.oracle import (
    ProblemInstance,
    Schedule,
    check_feasible,
    objective,
    solve_exhaustive,
    solve_greedy,
)

# Two users, three requests all arriving at t=0, a 2-token bucket refilling
# one token per slot: someone has to wait.
instance = ProblemInstance(capacity=2, rate=1.0, t_max=5,
                           arrivals={"u1": [0.0, 0.0], "u2": [0.0]})

greedy = solve_greedy(instance)
exact = solve_exhaustive(instance)
print("instance: B=2, r=1/slot, arrivals u1:[0,0] u2:[0]")
print(f"greedy schedule     {greedy.slots}  objective {objective(instance, greedy)}")
print(f"exhaustive schedule {exact.slots}  objective {objective(instance, exact)}")
print(f"token trajectory    {greedy.token_trajectory(instance)}")

print("\nconstraint checking names the first violated rule:")
bad_order = Schedule({"u1": [1, 0], "u2": [0]})
print(f"  u1 served out of order -> {check_feasible(instance, bad_order)}")
too_many = Schedule({"u1": [0, 0], "u2": [0]})
print(f"  three served at slot 0 -> {check_feasible(instance, too_many)}")

print("\ndraining a burst of ten through a one-token bucket:")
burst = ProblemInstance(capacity=1, rate=1.0, t_max=20, arrivals={"u": [0.0] * 10})
sched = solve_greedy(burst)
print(f"  slots {sched.slots['u']}")
print(f"  objective {objective(burst, sched)} (0 + 1 + ... + 9)")
