"""Head-to-head emulation on the virtual clock.

Replays one synthetic trace through all four strategies against the embedded
gateway (100-token bucket, 80 tokens/min). The virtual clock makes a 300 s
scenario finish in milliseconds and keeps every run exactly reproducible.

Offered load here is 800 requests against a 500-request budget, so roughly
300 requests' worth of retries must be timed well or burned as 429s.
"""

import time

from throttlekit.emulator import ExperimentConfig, run_experiment

RUNS = 10
print(f"synth5/800, {RUNS} virtual-clock runs per strategy\n")
print(f"{'strategy':>9} {'429 errors':>14} {'duration (s)':>14} "
      f"{'service (s)':>12} {'updates':>9}")

baseline = None
for strategy in ("ub", "wb", "atb", "aatb"):
    cfg = ExperimentConfig(strategy=strategy, profile="synth5", size=800,
                           runs=RUNS, seed=42, dataset_seed=0)
    t0 = time.perf_counter()
    result = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    s = result.summary.stats
    print(f"{strategy:>9} {s['total_429'][0]:>8.1f} ±{s['total_429'][1]:<5.1f}"
          f"{s['total_duration'][0]:>10.1f} ±{s['total_duration'][1]:<4.1f}"
          f"{s['avg_service_time'][0]:>10.2f} {s['update_messages'][0]:>9.1f}"
          f"   [{elapsed:.2f}s real]")
    if strategy == "ub":
        baseline = s

print("\nrelative to UB:")
for strategy in ("wb", "atb", "aatb"):
    cfg = ExperimentConfig(strategy=strategy, profile="synth5", size=800,
                           runs=RUNS, seed=42, dataset_seed=0)
    s = run_experiment(cfg).summary.stats
    err = 100 * (1 - s["total_429"][0] / baseline["total_429"][0])
    dur = 100 * (s["total_duration"][0] / baseline["total_duration"][0] - 1)
    print(f"  {strategy:>5}: {err:5.1f}% fewer 429s, {dur:+5.1f}% duration")

print("\nadaptive pacing trades a modest duration increase for a collapse in"
      "\nerror traffic; the telemetry-assisted variant nearly eliminates it.")
