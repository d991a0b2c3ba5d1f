"""Scenario assembly, random scenario generators and the named presets."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Callable

from .adversary import ByzantineProcess
from .channel_sync import CsProcess
from .core import AdversaryScript, ConfigError, ScenarioConfig, SendRequest, config_errors
from .oracle import Verdict, check_early_deletes, cs_bound, evaluate
from .rst import RstProcess
from .sender_inhibition import SiProcess
from .simnet import Process, Trace, run


def honest_process(cfg: ScenarioConfig, p: int) -> Process:
    if cfg.protocol == "rst":
        return RstProcess(p, cfg.n)
    if cfg.protocol == "sender_inhibition":
        return SiProcess(p, cfg.n, multicast=cfg.multicast)
    return CsProcess(p, cfg.n, multicast=cfg.multicast, hide_group=cfg.mcast_hide_group)


def build_processes(cfg: ScenarioConfig) -> dict[int, Process]:
    procs = {}
    for p in range(cfg.n):
        proc = honest_process(cfg, p)
        if p in cfg.byzantine:
            proc = ByzantineProcess(proc, cfg.byzantine[p])
        procs[p] = proc
    return procs


def simulate(cfg: ScenarioConfig) -> Trace:
    """Validate and run; configuration errors raise :class:`ConfigError`."""
    errors = config_errors(cfg)
    if errors:
        raise ConfigError("; ".join(str(e) for e in errors), errors)
    return run(cfg, build_processes(cfg))


def run_scenario(cfg: ScenarioConfig, check: bool = True) -> tuple[Trace, Verdict | None]:
    trace = simulate(cfg)
    return trace, (evaluate(trace, cfg) if check else None)


# -- random generators ----------------------------------------------------------------


def random_workload(rng: random.Random, n: int, count: int, span: int, *,
                    multicast: bool = False, senders=None) -> list[SendRequest]:
    senders = list(range(n)) if senders is None else list(senders)
    out = []
    for _ in range(count):
        s = rng.choice(senders)
        others = [p for p in range(n) if p != s]
        if multicast:
            size = rng.randint(1, len(others))
            dest = frozenset(rng.sample(others, size))
        else:
            dest = rng.choice(others)
        out.append(SendRequest(rng.randint(0, span), s, dest, None))
    return out


def random_rst(seed: int, *, n: int | None = None, count: int | None = None) -> ScenarioConfig:
    """Failure-free matrix-clock scenario: n in 2..5, at most 50 messages."""
    rng = random.Random(seed)
    n = rng.randint(2, 5) if n is None else n
    delta = rng.randint(1, 8)
    count = rng.randint(1, 50) if count is None else count
    workload = random_workload(rng, n, count, rng.randint(0, 6 * delta + count))
    end = max(r.time for r in workload)
    return ScenarioConfig(n=n, protocol="rst", delta=delta, horizon=end + 4 * delta + 1,
                          seed=rng.getrandbits(32), workload=workload)


SI_SCRIPTS = ("silent_ack", "crash_at")
CS_SCRIPTS = ("phantom_sent", "withhold_delivered", "crash_at", "silent")


def _adversaries(rng: random.Random, n: int, names, span: int) -> dict[int, AdversaryScript]:
    chosen = rng.sample(range(n), rng.randint(0, n - 2))
    out = {}
    for p in sorted(chosen):
        name = rng.choice(names)
        params = {}
        if name == "crash_at":
            params = {"time": rng.randint(0, span)}
        elif name == "phantom_sent":
            params = {"per_send": rng.randint(1, 2),
                      "times": sorted(rng.sample(range(span + 1), min(2, span + 1)))}
        out[p] = AdversaryScript(name, params)
    return out


def random_si(seed: int, *, multicast: bool | None = None) -> ScenarioConfig:
    """Sender-Inhibition with up to n-2 silent or crashing processes."""
    rng = random.Random(seed)
    n = rng.randint(2, 6)
    delta = rng.randint(1, 6)
    multicast = rng.random() < 0.3 if multicast is None else multicast
    count = rng.randint(1, 25)
    span = rng.randint(0, 4 * delta * count // max(n, 1) + 1)
    workload = random_workload(rng, n, count, span, multicast=multicast)
    byz = _adversaries(rng, n, SI_SCRIPTS, span)
    end = max(r.time for r in workload)
    # every backlogged send can cost a full 2*delta lock
    horizon = end + 2 * delta * count + 4 * delta + 1
    return ScenarioConfig(n=n, protocol="sender_inhibition", multicast=multicast, delta=delta,
                          horizon=horizon, seed=rng.getrandbits(32), workload=workload,
                          byzantine=byz, app_ready_delay=rng.choice([0, 0, 1]))


def random_cs(seed: int, *, mode: str | None = None, delta_s: int | None = None,
              delta_r: int | None = None, byzantine: bool = True, n: int | None = None,
              count: int | None = None) -> ScenarioConfig:
    """Channel Sync in one of the modes ``p2p``, ``mcast`` or ``mcast-hidden``."""
    rng = random.Random(seed)
    n = rng.randint(3, 6) if n is None else n
    delta = rng.randint(2, 8)
    mode = rng.choice(["p2p", "mcast", "mcast-hidden"]) if mode is None else mode
    if delta_s is None:
        delta_s = rng.choice([0, delta // 2, delta])
    multicast = mode != "p2p"
    hidden = mode == "mcast-hidden"
    count = rng.randint(1, 30) if count is None else count
    span = rng.randint(0, 3 * delta + count)
    workload = random_workload(rng, n, count, span, multicast=multicast)
    byz = _adversaries(rng, n, CS_SCRIPTS, span) if byzantine else {}
    end = max(r.time for r in workload)
    dr = delta if delta_r is None else delta_r
    horizon = end + delta + cs_bound(delta_s, dr) + 4 * delta + 1
    return ScenarioConfig(n=n, protocol="channel_sync", multicast=multicast, delta=delta,
                          delta_s=0 if hidden else delta_s, delta_r=dr, horizon=horizon,
                          seed=rng.getrandbits(32), workload=workload, byzantine=byz,
                          mcast_hide_group=hidden)


def no_threshold(seed: int, *, n: int = 5, byzantine: int = 3, count: int = 20) -> ScenarioConfig:
    """Channel Sync where Byzantine processes outnumber the correct ones.

    Only the correct processes have workload; each Byzantine process runs a
    random script from the Channel Sync mix.
    """
    rng = random.Random(seed)
    delta = rng.randint(2, 8)
    delta_s = rng.choice([0, delta // 2, delta])
    byz_ids = sorted(rng.sample(range(n), byzantine))
    correct = [p for p in range(n) if p not in byz_ids]
    span = rng.randint(0, 3 * delta + count)
    workload = []
    for _ in range(count):
        s = rng.choice(correct)
        workload.append(SendRequest(rng.randint(0, span), s, rng.choice([p for p in correct if p != s])))
    byz = {}
    for p in byz_ids:
        name = rng.choice(CS_SCRIPTS)
        params = {}
        if name == "crash_at":
            params = {"time": rng.randint(0, span)}
        elif name == "phantom_sent":
            params = {"per_send": 1, "times": sorted(rng.sample(range(span + 1), min(3, span + 1)))}
        byz[p] = AdversaryScript(name, params)
    end = max(r.time for r in workload)
    return ScenarioConfig(n=n, protocol="channel_sync", delta=delta, delta_s=delta_s,
                          horizon=end + delta + cs_bound(delta_s, delta) + 4 * delta + 1,
                          seed=rng.getrandbits(32), workload=workload, byzantine=byz)


def early_delete_search(delta: int = 5, tries: int = 500) -> tuple[ScenarioConfig, Verdict] | None:
    """Look for a delivered-control deleted before its sent-control, with delta_r = delta - 1.

    The premise can only break when some chain i->j->x is faster than the
    direct i->x channel by more than delta_r, so the search allows
    zero-tick deliveries and small correct-only scenarios.
    """
    for seed in range(tries):
        cfg = random_cs(seed, mode="p2p", delta_s=0, delta_r=delta - 1, byzantine=False,
                        n=3 + seed % 2, count=1 + seed % 4)
        cfg = replace(cfg, delta=delta, delta_r=delta - 1, min_delay=0,
                      horizon=max(r.time for r in cfg.workload) + 6 * delta + 1)
        trace = simulate(cfg)
        verdict = check_early_deletes(trace, cfg)
        if verdict.early_deletes:
            return cfg, verdict
    return None


# -- presets -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    name: str
    build: Callable[[int], ScenarioConfig]
    expect: str  # "clean" | "liveness" | "safety"
    about: str
    default_seed: int = 1

    def config(self, seed: int | None = None) -> ScenarioConfig:
        return self.build(self.default_seed if seed is None else seed)

    def outcome_ok(self, verdict: Verdict) -> bool:
        if self.expect == "clean":
            return verdict.clean
        if self.expect == "liveness":
            return bool(verdict.liveness_violations)
        return bool(verdict.safety_violations)


def _boost(seed: int) -> ScenarioConfig:
    # p2 claims one message to p1 that it never sends; p0 inherits the claim
    # after delivering p2's message, and p1 then waits for it forever.
    delta = 5
    workload = [SendRequest(0, 2, 0)]
    workload += [SendRequest(delta + 1 + 2 * k, 0, 1) for k in range(4)]
    workload += [SendRequest(delta + 2 + 2 * k, 1, 0) for k in range(2)]
    end = max(r.time for r in workload)
    return ScenarioConfig(
        n=3, protocol="rst", delta=delta, horizon=end + 10 * delta, seed=seed, workload=workload,
        byzantine={2: AdversaryScript("boost", {"pairs": [[2, 1]], "d": 1})})


def _shrink(seed: int) -> ScenarioConfig:
    # p0 -> p1 and p0 -> p2 are slow; p0 -> p3 -> p1 -> p2 is fast.  p3 hides
    # p0's sends in its piggyback, so p1 delivers p3's message before p0's
    # (direct) and p2 delivers p1's relay before p0's (two hops).
    delta = 10
    workload = [SendRequest(0, 0, 1), SendRequest(0, 0, 2), SendRequest(0, 0, 3),
                SendRequest(2, 3, 1), SendRequest(4, 1, 2)]
    schedule = {(0, 1): delta, (0, 2): delta, (0, 3): 1, (3, 1): 1, (1, 2): 1}
    return ScenarioConfig(
        n=4, protocol="rst", delta=delta, horizon=4 + 6 * delta, seed=seed, workload=workload,
        delay_model="adversarial_schedule", schedule=schedule,
        byzantine={3: AdversaryScript("shrink", {"entries": [[0, 1], [0, 2]]})})


def _si_multicast(seed: int) -> ScenarioConfig:
    # p0 multicasts to {1, 2}; p1 gets it at once and relays to p2, which
    # still waits for p0's copy.  The sender's lock orders only the sender's
    # own later sends, so the relay overtakes the original at p2.
    delta = 5
    workload = [SendRequest(0, 0, frozenset({1, 2})), SendRequest(2, 1, frozenset({2, 3})),
                SendRequest(20, 2, frozenset({0, 1})), SendRequest(22, 0, frozenset({1, 3}))]
    schedule = {(0, 1): 1, (0, 2): delta, (1, 2): 1}
    return ScenarioConfig(
        n=4, protocol="sender_inhibition", multicast=True, delta=delta, seed=seed,
        workload=workload, horizon=22 + 12 * delta, delay_model="adversarial_schedule",
        schedule=schedule, byzantine={3: AdversaryScript("silent_ack")})


def _mixed(protocol: str, *, n: int = 4, count: int = 20, multicast: bool = False,
           hidden: bool = False, byzantine=None, delta: int = 5, delta_s: int = 0):
    def build(seed: int) -> ScenarioConfig:
        rng = random.Random(f"{protocol}-{n}-{count}-{multicast}-{hidden}-{seed}")
        workload = random_workload(rng, n, count, 4 * delta, multicast=multicast)
        end = max(r.time for r in workload)
        horizon = end + (2 * delta * count if protocol == "sender_inhibition" else 0) + 8 * delta
        return ScenarioConfig(n=n, protocol=protocol, multicast=multicast, delta=delta,
                              delta_s=delta_s, horizon=horizon, seed=seed, workload=workload,
                              byzantine=dict(byzantine or {}), mcast_hide_group=hidden)
    return build


PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("boost-attack-rst", _boost, "liveness",
           "matrix clocks: one inflated entry blocks a correct pair forever"),
    Preset("shrink-attack-rst", _shrink, "safety",
           "matrix clocks: deflated entries let messages overtake their causal past"),
    Preset("si-clean", _mixed("sender_inhibition"), "clean", "Sender-Inhibition, no faults"),
    Preset("si-silent-ack", _mixed("sender_inhibition", byzantine={3: AdversaryScript("silent_ack")}),
           "clean", "Sender-Inhibition with a process that never acks"),
    Preset("si-multicast", _si_multicast, "safety",
           "Sender-Inhibition multicast: a co-recipient's relay overtakes the original"),
    Preset("cs-clean", _mixed("channel_sync"), "clean", "Channel Sync, no faults"),
    Preset("cs-phantom", _mixed("channel_sync", byzantine={
        3: AdversaryScript("phantom_sent", {"per_send": 1, "times": [3, 9]})}),
        "clean", "Channel Sync with announced-but-never-sent messages"),
    Preset("cs-withhold", _mixed("channel_sync", byzantine={3: AdversaryScript("withhold_delivered")}),
           "clean", "Channel Sync with a process that hides its deliveries"),
    Preset("cs-multicast", _mixed("channel_sync", n=5, multicast=True, byzantine={
        4: AdversaryScript("withhold_delivered")}), "clean", "Channel Sync multicast"),
    Preset("cs-multicast-hidden-group", _mixed("channel_sync", n=5, multicast=True, hidden=True,
                                               byzantine={4: AdversaryScript("phantom_sent")}),
           "clean", "Channel Sync multicast without group lists in sent-controls"),
]}


# -- latency sweep ------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    delta_s: int
    delta_r: int
    bound: int
    runs: int
    mean_delay: float
    max_delay: int
    bound_held: bool


def queue_delays(trace: Trace, correct) -> list[int]:
    correct = set(correct)
    pushed, out = {}, []
    for ev in trace:
        env = ev.envelope
        if ev.process not in correct or env is None or env.kind != "app":
            continue
        if ev.kind == "push":
            pushed[env.id] = ev.time
        elif ev.kind == "deliver" and env.id in pushed:
            out.append(ev.time - pushed.pop(env.id))
    return out


def sweep(delta_s_values, delta_r: int | None = None, *, delta: int = 5, n: int = 4,
          count: int = 30, seeds=range(5)) -> list[SweepRow]:
    """Queue-delay statistics of Channel Sync as ``delta_s`` varies."""
    values = list(delta_s_values)
    if not values:
        raise ValueError("empty delta_s range")
    dr = delta if delta_r is None else delta_r
    rows = []
    for ds in values:
        delays, held = [], True
        for seed in seeds:
            rng = random.Random(f"sweep-{n}-{count}-{seed}")
            workload = random_workload(rng, n, count, 4 * delta)
            end = max(r.time for r in workload)
            cfg = ScenarioConfig(n=n, protocol="channel_sync", delta=delta, delta_s=ds,
                                 delta_r=dr, seed=seed, workload=workload,
                                 horizon=end + delta + cs_bound(ds, dr) + 4 * delta + 1)
            trace, verdict = run_scenario(cfg)
            delays += queue_delays(trace, cfg.correct)
            held = held and not verdict.bound_violations
        mean = sum(delays) / len(delays) if delays else 0.0
        rows.append(SweepRow(ds, dr, cs_bound(ds, dr), len(list(seeds)), mean,
                             max(delays, default=0), held))
    return rows
