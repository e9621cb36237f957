"""Synthetic request traces: the five-client and hundred-client scenarios.

Every client receives one request plus a Poisson-distributed count; arrival
timestamps come from per-client exponential-gap processes folded onto the
five-minute experiment window. The hundred-client recipe uses a short gap
scale, so each client's requests form one tight episode; the five-client
recipe spreads essentially uniformly.
"""

import numpy as np

from throttlekit import gen_synthetic, save_dataset
from throttlekit.profiles import workload_config

for profile, size in (("synth5", 800), ("synth100", 800)):
    cfg = workload_config(profile, size=size, seed=0)
    ds = gen_synthetic(cfg)
    counts = sorted(len(reqs) for reqs in ds.by_client().values())
    arrivals = np.array([r.arrival_time for r in ds.requests])
    print(f"=== {profile}/{size} (lambda = {cfg.lam}, gap scale = {cfg.scale_s}s) ===")
    print(f"  clients: {ds.user_count}, total requests: {len(ds)}")
    print(f"  per-client counts: min {counts[0]}, median {counts[len(counts) // 2]}, "
          f"max {counts[-1]}")
    quarters = [(arrivals < q).sum() for q in (75, 150, 225, 300)]
    print(f"  arrivals by quarter of the window: {quarters[0]}, "
          f"{quarters[1] - quarters[0]}, {quarters[2] - quarters[1]}, "
          f"{quarters[3] - quarters[2]}")
    # one client's texture
    cid, reqs = next(iter(sorted(ds.by_client().items())))
    head = ", ".join(f"{r.arrival_time:.1f}" for r in reqs[:8])
    print(f"  client {cid} arrivals: {head}{' ...' if len(reqs) > 8 else ''}\n")

cfg = workload_config("synth5", size=500, seed=7)
ds = gen_synthetic(cfg)
digest = save_dataset(ds, "/tmp/throttlekit-demo-synth5.csv")
print(f"datasets round-trip through CSV with a content hash: {digest[:16]}...")
print("regenerating with the same seed reproduces the file byte for byte")
