"""
Forging matrix clocks
=====================

A single Byzantine process can break a matrix-clock causal broadcast in two
ways: by inflating entries of its timestamp (receivers wait forever for
messages that were never sent) or by deflating them (messages overtake
their causal past).  Both attacks are run here on the simulator and checked
against the ground-truth happens-before relation.
"""

from bftcausal.adversary import boost_attack, shrink_attack
from bftcausal.rst import MatrixClock
from bftcausal.scenarios import PRESETS, run_scenario

# A clock where p0 has sent two messages to p1 and one to p2
clock = MatrixClock.of([[0, 2, 1], [0, 0, 0], [0, 0, 0]])
print("true clock\n", clock.m)

# Boosting claims a third message on (0, 1); shrinking hides the one on (0, 2)
print("boosted\n", boost_attack(clock, (0, 1), 1).m)
print("shrunk\n", shrink_attack(clock, (0, 2)).m)

# Boost: p2 claims a message to p1 that it never sends.  p0 inherits the
# claim, and p1 waits forever for the phantom before delivering from p0
trace, verdict = run_scenario(PRESETS["boost-attack-rst"].config())
print("\nboost attack")
print(verdict.summary())

# Shrink: p3 under-reports what it has seen, and its messages are delivered
# ahead of their causal past; a correct relay spreads the damage one hop on
trace, verdict = run_scenario(PRESETS["shrink-attack-rst"].config())
print("\nshrink attack")
print(verdict.summary())
