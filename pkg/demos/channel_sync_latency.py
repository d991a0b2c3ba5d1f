"""
Channel Sync queue delay
========================

Channel Sync holds an app message in its source queue while control
messages ahead of it wait for their partners or time out.  The delay is
bounded by max(delta_s, delta_r + max(delta_s, delta_r)) ticks.  This
script sweeps delta_s with delta_r = delta, prints the observed delay next
to the bound, and finishes with two correct processes talking through
three Byzantine ones.
"""

import numpy as np

from bftcausal.oracle import cs_bound
from bftcausal.scenarios import no_threshold, run_scenario, sweep

delta = 6
rows = sweep(range(0, delta + 1, 2), delta_r=delta, delta=delta, n=4, count=30, seeds=range(10))
print("delta_s  bound  mean  max  held")
for r in rows:
    print(f"{r.delta_s:7d}  {r.bound:5d}  {r.mean_delay:4.2f}  {r.max_delay:3d}  {r.bound_held}")

# The bound grows linearly in delta_s once delta_s passes delta_r
grid = np.array([[cs_bound(ds, dr) for dr in range(0, 9, 2)] for ds in range(0, 9, 2)])
print("\nbound for delta_s (rows) x delta_r (columns) in 0, 2, .., 8\n", grid)

# No threshold on the number of Byzantine processes
for seed in range(3):
    cfg = no_threshold(seed)
    _, verdict = run_scenario(cfg)
    scripts = {p: s.name for p, s in cfg.byzantine.items()}
    print(f"\nseed {seed}: correct {cfg.correct}, byzantine {scripts}")
    print(verdict.summary())
