"""
Sender-Inhibition lock holds
============================

Sender-Inhibition serialises each process's sends: after sending, a
process stays locked until the receiver acks or a 2*delta timer fires.
Silence from the receiver costs exactly 2*delta and never more.  With
point-to-point sends the lock is enough for causal order; with multicast
a co-recipient can relay the message before the original copy reaches the
rest of the group, and the checker catches the resulting inversion.
"""

import numpy as np

from bftcausal.oracle import lock_holds
from bftcausal.scenarios import PRESETS, random_si, run_scenario

# Lock-hold durations, measured in units of 2*delta, over random
# point-to-point scenarios with silent and crashing processes
ratios = []
for seed in range(100):
    cfg = random_si(seed, multicast=False)
    trace, verdict = run_scenario(cfg)
    assert verdict.clean, verdict.summary()
    ratios += [(t1 - t0) / (2 * cfg.delta) for p, _, t0, t1 in lock_holds(trace)
               if p not in cfg.byzantine]
ratios = np.array(ratios)
print(f"{ratios.size} locks; hold / (2*delta): min {ratios.min():.2f}, "
      f"median {np.median(ratios):.2f}, max {ratios.max():.2f}")
print("fraction held the full 2*delta:", np.mean(ratios == 1.0).round(3))

# A silent receiver: every lock on a message to p1 lasts the full 2*delta
trace, verdict = run_scenario(PRESETS["si-silent-ack"].config())
print("\nsilent receiver")
print(verdict.summary())

# Multicast: p1 relays m0.1 to p2 before p0's own copy lands there
trace, verdict = run_scenario(PRESETS["si-multicast"].config())
print("\nmulticast relay race")
print(verdict.summary())
