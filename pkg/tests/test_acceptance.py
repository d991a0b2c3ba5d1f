"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; a summary of all nine
criteria is printed at the end of the session.
"""

import random
import time
from dataclasses import replace

from bftcausal.oracle import (
    brute_force_hb, build_hb, check_early_deletes, cs_bound, evaluate, lock_holds, plant_inversion,
    relation_for,
)
from bftcausal.scenarios import (
    PRESETS, early_delete_search, no_threshold, random_cs, random_rst, random_si, run_scenario, simulate,
)


def test_1_failure_free_rst(criterion):
    t0 = time.perf_counter()
    runs = dirty = compared = mismatched = 0
    for w in range(200):
        base = random_rst(w)
        for s in range(5):
            cfg = replace(base, seed=base.seed + s)
            trace, verdict = run_scenario(cfg)
            runs += 1
            dirty += not verdict.clean
            hb = build_hb(trace)
            if len(hb) <= 12:
                compared += 1
                mismatched += not hb.same_as(brute_force_hb(trace))
    elapsed = time.perf_counter() - t0
    ok = dirty == 0 and mismatched == 0 and elapsed < 30
    assert criterion(1, ok, f"{runs} runs, {dirty} with violations, {mismatched}/{compared} "
                            f"relation mismatches, {elapsed:.1f}s")


def test_2_boost_attack(criterion):
    preset = PRESETS["boost-attack-rst"]
    stalled = {}
    for seed in range(1, 21):
        cfg = preset.config(seed)
        assert cfg.n == 3
        _, verdict = run_scenario(cfg)
        stalled[seed] = len(verdict.liveness_violations)
    ok = all(v >= 1 for v in stalled.values())
    assert criterion(2, ok, f"undelivered correct->correct messages per seed: min {min(stalled.values())}")


def test_3_shrink_attack(criterion):
    cfg = PRESETS["shrink-attack-rst"].config()
    trace, verdict = run_scenario(cfg)
    rel = relation_for(trace, cfg)
    direct = [v for v in verdict.safety_violations if rel.origin[v.later] in cfg.byzantine]
    two_hop = [v for v in verdict.safety_violations if rel.origin[v.later] not in cfg.byzantine]
    ok = bool(direct) and bool(two_hop)
    assert criterion(3, ok, f"{len(direct)} direct, {len(two_hop)} two-hop violations "
                            f"at correct processes")


def test_4_sender_inhibition(criterion):
    dirty = long_locks = silent_locks = inexact = 0
    for seed in range(200):
        cfg = random_si(seed, multicast=False)
        trace, verdict = run_scenario(cfg)
        dirty += not verdict.clean
        limit = 2 * cfg.delta
        silent = {p for p, s in cfg.byzantine.items() if s.name == "silent_ack"}
        dest = {ev.envelope.msg: ev.envelope.dest for ev in trace.by_kind("send")
                if ev.envelope.kind == "app"}
        for p, msg, t0, t1 in lock_holds(trace):
            if p in cfg.byzantine:
                continue
            long_locks += t1 - t0 > limit
            if dest[msg] in silent:
                silent_locks += 1
                inexact += t1 - t0 != limit
    ok = dirty == 0 and long_locks == 0 and inexact == 0 and silent_locks > 0
    assert criterion(4, ok, f"200 point-to-point runs, {dirty} with violations, {long_locks} locks "
                            f"over 2*delta, {inexact}/{silent_locks} silent-receiver locks not exactly 2*delta")


def test_5_delivered_controls_outlive_sent_controls(criterion):
    instances = 0
    for seed in range(200):
        cfg = random_cs(seed)
        assert cfg.delta_r == cfg.delta
        instances += len(check_early_deletes(simulate(cfg), cfg).early_deletes)
    found = early_delete_search()
    ok = instances == 0 and found is not None
    witness = "none" if found is None else f"n={found[0].n}, {len(found[0].workload)} messages"
    assert criterion(5, ok, f"{instances} instances at delta_r = delta; counterexample at "
                            f"delta_r = delta-1: {witness}")


def test_6_channel_sync(criterion):
    t0 = time.perf_counter()
    dirty = over = 0
    worst_ratio = 0.0
    per_run = []
    for seed in range(300):
        cfg = random_cs(seed)
        assert cfg.delta_s in (0, cfg.delta // 2, cfg.delta)
        _, verdict = run_scenario(cfg)
        dirty += bool(verdict.safety_violations or verdict.liveness_violations)
        bound = cs_bound(cfg.effective_delta_s, cfg.delta_r)
        over += verdict.max_observed_delay > bound
        per_run.append(verdict.max_observed_delay)
        worst_ratio = max(worst_ratio, verdict.max_observed_delay / bound if bound else 0.0)
    elapsed = time.perf_counter() - t0
    ok = dirty == 0 and over == 0 and elapsed < 120
    assert criterion(6, ok, f"300 runs, {dirty} with violations, {over} over the bound, max delay "
                            f"{max(per_run)} (worst delay/bound {worst_ratio:.2f}), {elapsed:.1f}s")


def test_7_no_threshold(criterion):
    results = []
    for seed in range(10):
        cfg = no_threshold(seed)
        assert cfg.n == 5 and len(cfg.byzantine) == 3 and len(cfg.workload) == 20
        _, verdict = run_scenario(cfg)
        results.append(not verdict.safety_violations and not verdict.liveness_violations)
    assert criterion(7, all(results), f"{sum(results)}/10 seeds clean")


def test_8_determinism(criterion):
    differ = [name for name, preset in PRESETS.items()
              if simulate(preset.config()).to_jsonl() != simulate(preset.config()).to_jsonl()]
    assert criterion(8, not differ, f"{len(PRESETS)} presets, differing: {differ or 'none'}")


def test_9_planted_inversions(criterion):
    rng = random.Random(9)
    planted = flagged = 0
    seed = 0
    while planted < 50:
        cfg = random_rst(seed) if seed % 2 else random_cs(seed)
        seed += 1
        trace = simulate(cfg)
        bad = plant_inversion(trace, relation_for(trace, cfg), cfg.correct, rng)
        if bad is None:
            continue
        planted += 1
        flagged += bool(evaluate(bad, cfg).safety_violations)
    assert criterion(9, flagged == planted, f"{flagged}/{planted} flagged")
