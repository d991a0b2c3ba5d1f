"""Ground-truth checkers over simulator traces.

Relations are kept as one Python-int bitset per message: bit ``a`` of
``pred[b]`` is set iff message ``a`` precedes message ``b``.  Both the
incremental builders and the brute-force reference produce the same
:class:`CausalRelation`, so they can be compared element for element.

The checkers never look at protocol state; a Byzantine process's beliefs
cannot influence a verdict.
"""

from __future__ import annotations

import json
import random
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .core import ScenarioConfig, TraceEvent
from .simnet import Trace


class TraceError(ValueError):
    """A trace is not well formed; ``position`` indexes the offending event."""

    def __init__(self, message: str, position: int):
        super().__init__(f"event {position}: {message}")
        self.position = position


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


@dataclass
class CausalRelation:
    messages: list[str]
    pred: list[int]
    origin: dict[str, int]
    dests: dict[str, frozenset]

    def __post_init__(self):
        self.index = {m: i for i, m in enumerate(self.messages)}

    def __len__(self) -> int:
        return len(self.messages)

    def precedes(self, a: str, b: str) -> bool:
        return bool(self.pred[self.index[b]] >> self.index[a] & 1)

    def predecessors(self, m: str) -> list[str]:
        return [self.messages[a] for a in _bits(self.pred[self.index[m]])]

    def edges(self) -> set[tuple[str, str]]:
        return {(self.messages[a], self.messages[b])
                for b in range(len(self.messages)) for a in _bits(self.pred[b])}

    @property
    def closure(self) -> np.ndarray:
        """``closure[a, b]`` is True iff message ``a`` precedes message ``b``."""
        k = len(self.messages)
        out = np.zeros((k, k), dtype=bool)
        for b in range(k):
            for a in _bits(self.pred[b]):
                out[a, b] = True
        return out

    def law_violations(self) -> list[str]:
        """Irreflexivity, asymmetry and transitivity, checked on the closure."""
        c = self.closure
        problems = []
        if np.any(np.diag(c)):
            problems.append("not irreflexive")
        if np.any(c & c.T):
            problems.append("not asymmetric")
        if c.size and np.any((c.astype(np.int64) @ c.astype(np.int64) > 0) & ~c):
            problems.append("not transitive")
        return problems

    def same_as(self, other: "CausalRelation") -> bool:
        return set(self.messages) == set(other.messages) and self.edges() == other.edges()


# -- trace scanning -------------------------------------------------------------------


@dataclass
class _Scan:
    order: list[str]
    origin: dict[str, int]
    dests: dict[str, set]
    # per process, in trace order: ("send"|"deliver", msg, counterpart process)
    local: dict[int, list[tuple[str, str, int]]]
    delivered_at: dict[str, set]


def _scan(trace: Trace | Iterable[TraceEvent]) -> _Scan:
    order: list[str] = []
    origin: dict[str, int] = {}
    dests: dict[str, set] = defaultdict(set)
    local: dict[int, list] = defaultdict(list)
    delivered_at: dict[str, set] = defaultdict(set)
    last_time = 0
    for pos, ev in enumerate(trace):
        if ev.time < last_time:
            raise TraceError(f"time goes backwards ({ev.time} < {last_time})", pos)
        last_time = ev.time
        if ev.kind not in ("send", "deliver"):
            continue
        env = ev.envelope
        if env is None:
            raise TraceError(f"{ev.kind} event without an envelope", pos)
        if env.kind != "app":
            if ev.kind == "deliver":
                raise TraceError("deliver event for a non-app envelope", pos)
            continue
        m = env.msg
        if ev.kind == "send":
            if ev.process != env.origin:
                raise TraceError("send recorded at a process other than the origin", pos)
            if m not in origin:
                order.append(m)
                origin[m] = env.origin
                local[ev.process].append(("send", m, env.dest))
            elif origin[m] != env.origin:
                raise TraceError(f"message {m} sent by two processes", pos)
            dests[m].add(env.dest)
        else:
            if m not in origin:
                raise TraceError(f"message {m} delivered but never sent", pos)
            if ev.process != env.dest:
                raise TraceError("deliver recorded away from the destination", pos)
            local[ev.process].append(("deliver", m, env.origin))
            delivered_at[m].add(ev.process)
    return _Scan(order, origin, dict(dests), dict(local), dict(delivered_at))


def _relation(scan: _Scan, messages: list[str], pred: list[int]) -> CausalRelation:
    return CausalRelation(messages, pred, {m: scan.origin[m] for m in messages},
                          {m: frozenset(scan.dests[m]) for m in messages})


# -- happens before ---------------------------------------------------------------------


def build_hb(trace) -> CausalRelation:
    """Classical happens-before over app messages, built in one pass.

    Each process keeps the set of messages it has sent or delivered together
    with their pasts; a send takes that set as the new message's past.
    """
    scan = _scan(trace)
    idx = {m: i for i, m in enumerate(scan.order)}
    pred = [0] * len(scan.order)
    known: dict[int, int] = defaultdict(int)
    for ev in trace:
        if ev.kind not in ("send", "deliver") or ev.envelope.kind != "app":
            continue
        m = ev.envelope.msg
        b = idx[m]
        if ev.kind == "send":
            if scan.origin[m] == ev.process and not known[ev.process] >> b & 1:
                pred[b] = known[ev.process]
                known[ev.process] |= 1 << b
        else:
            known[ev.process] |= (1 << b) | pred[b]
    return _relation(scan, scan.order, pred)


def _floyd_warshall(k: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    reach = np.zeros((k, k), dtype=bool)
    for a, b in edges:
        reach[a, b] = True
    for mid in range(k):
        reach |= np.outer(reach[:, mid], reach[mid, :])
    return [int(sum(1 << a for a in np.flatnonzero(reach[:, b]))) for b in range(k)]


def brute_force_hb(trace) -> CausalRelation:
    """Reference: raw edges from every process's event order, then reachability."""
    scan = _scan(trace)
    idx = {m: i for i, m in enumerate(scan.order)}
    edges = set()
    for events in scan.local.values():
        for x, (_, m, _) in enumerate(events):
            for kind2, m2, _ in events[x + 1:]:
                if kind2 == "send" and m2 != m:
                    edges.add((idx[m], idx[m2]))
    return _relation(scan, scan.order, _floyd_warshall(len(scan.order), edges))


# -- Byzantine happens before ------------------------------------------------------------


def _bhb_universe(scan: _Scan, byzantine: set[int]):
    in_s = [m for m in scan.order
            if any(p not in byzantine for p in scan.delivered_at.get(m, ()))]
    return in_s, {m: i for i, m in enumerate(in_s)}


def build_bhb(trace, byzantine: Iterable[int]) -> CausalRelation:
    """Byzantine happens-before over messages delivered at correct processes.

    * every source's messages are totally ordered by the source's send
      order, which the simulator records as ground truth;
    * a correct process that sent a message to, or delivered one from,
      another correct process passes it (and its past) on to its later sends.
    """
    byz = set(byzantine)
    scan = _scan(trace)
    in_s, idx = _bhb_universe(scan, byz)
    pred = [0] * len(in_s)
    known: dict[int, int] = defaultdict(int)
    source_chain: dict[int, int] = defaultdict(int)
    seen: set[str] = set()
    for ev in trace:
        if ev.kind not in ("send", "deliver") or ev.envelope.kind != "app":
            continue
        m = ev.envelope.msg
        if m not in idx:
            continue
        b, p = idx[m], ev.process
        if ev.kind == "send":
            if m in seen:
                continue
            seen.add(m)
            pred[b] = source_chain[p] | (known[p] if p not in byz else 0)
            source_chain[p] |= pred[b] | (1 << b)
            if p not in byz and any(d not in byz for d in scan.dests[m]):
                known[p] |= pred[b] | (1 << b)
        elif p not in byz and ev.envelope.origin not in byz:
            known[p] |= pred[b] | (1 << b)
    return _relation(scan, in_s, pred)


def brute_force_bhb(trace, byzantine: Iterable[int]) -> CausalRelation:
    byz = set(byzantine)
    scan = _scan(trace)
    in_s, idx = _bhb_universe(scan, byz)
    edges = set()
    by_source: dict[int, list[int]] = defaultdict(list)
    for m in in_s:
        by_source[scan.origin[m]].append(idx[m])
    for chain in by_source.values():
        for x, a in enumerate(chain):
            edges.update((a, b) for b in chain[x + 1:])
    for p, events in scan.local.items():
        if p in byz:
            continue
        for x, (kind, m, other) in enumerate(events):
            if m not in idx:
                continue
            if kind == "send" and not any(d not in byz for d in scan.dests[m]):
                continue
            if kind == "deliver" and other in byz:
                continue
            for kind2, m2, _ in events[x + 1:]:
                if kind2 == "send" and m2 in idx and m2 != m:
                    edges.add((idx[m], idx[m2]))
    return _relation(scan, in_s, _floyd_warshall(len(in_s), edges))


# -- verdicts ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SafetyViolation:
    earlier: str  # must be delivered first
    later: str
    dest: int
    earlier_pos: int | None  # None: never delivered
    later_pos: int


@dataclass(frozen=True)
class LivenessViolation:
    msg: str | None  # None: the request was never even sent
    sender: int
    dest: int


@dataclass(frozen=True)
class BoundViolation:
    subject: str
    process: int
    observed: int
    bound: int
    kind: str = "queue"  # "queue" | "lock"


@dataclass(frozen=True)
class EarlyDelete:
    process: int
    actor: int
    subject: int
    seq: list


@dataclass
class Verdict:
    safety_violations: list[SafetyViolation] = field(default_factory=list)
    liveness_violations: list[LivenessViolation] = field(default_factory=list)
    bound_violations: list[BoundViolation] = field(default_factory=list)
    early_deletes: list[EarlyDelete] = field(default_factory=list)
    max_observed_delay: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.safety_violations or self.liveness_violations
                    or self.bound_violations or self.early_deletes)

    def merge(self, other: "Verdict") -> "Verdict":
        self.safety_violations += other.safety_violations
        self.liveness_violations += other.liveness_violations
        self.bound_violations += other.bound_violations
        self.early_deletes += other.early_deletes
        self.max_observed_delay = max(self.max_observed_delay, other.max_observed_delay)
        self.notes += other.notes
        return self

    def to_jsonl(self) -> str:
        lines = []
        for kind, items in (("safety", self.safety_violations),
                            ("liveness", self.liveness_violations),
                            ("bound", self.bound_violations),
                            ("early_delete", self.early_deletes)):
            lines += [json.dumps({"kind": kind, **asdict(v)}, separators=(",", ":")) for v in items]
        lines.append(json.dumps({"kind": "summary", "clean": self.clean,
                                 "max_observed_delay": self.max_observed_delay,
                                 "notes": self.notes}, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        head = "clean" if self.clean else "VIOLATIONS"
        parts = [f"verdict: {head}",
                 f"  safety violations:   {len(self.safety_violations)}",
                 f"  liveness violations: {len(self.liveness_violations)}",
                 f"  bound violations:    {len(self.bound_violations)}",
                 f"  early deletes:       {len(self.early_deletes)}",
                 f"  max queue delay:     {self.max_observed_delay}"]
        for v in self.safety_violations[:5]:
            parts.append(f"    {v.later} delivered at p{v.dest} before {v.earlier}")
        for v in self.liveness_violations[:5]:
            parts.append(f"    {v.msg or 'unsent request'} p{v.sender}->p{v.dest} never delivered")
        parts += [f"  note: {n}" for n in self.notes]
        return "\n".join(parts)


def _deliveries(trace) -> dict[int, list[str]]:
    out: dict[int, list[str]] = defaultdict(list)
    for ev in trace:
        if ev.kind == "deliver":
            out[ev.process].append(ev.envelope.msg)
    return out


def check_safety(trace, relation: CausalRelation, correct: Iterable[int]) -> Verdict:
    """Every related pair addressed to a common correct process is delivered in order there."""
    verdict = Verdict()
    by_proc = _deliveries(trace)
    for d in sorted(set(correct)):
        seq = by_proc.get(d, [])
        first = {}
        for pos, m in enumerate(seq):
            first.setdefault(m, pos)
        for pos, m2 in enumerate(seq):
            if m2 not in relation.index or first[m2] != pos:
                continue
            for a in _bits(relation.pred[relation.index[m2]]):
                m1 = relation.messages[a]
                if d not in relation.dests[m1]:
                    continue
                p1 = first.get(m1)
                if p1 is None or p1 > pos:
                    verdict.safety_violations.append(SafetyViolation(m1, m2, d, p1, pos))
    return verdict


def check_liveness(trace, cfg: ScenarioConfig) -> Verdict:
    """Every correct-to-correct message, including still-unsent requests, is delivered by the horizon."""
    verdict = Verdict()
    correct = set(cfg.correct)
    scan = _scan(trace)
    for m in scan.order:
        if scan.origin[m] not in correct:
            continue
        got = scan.delivered_at.get(m, set())
        for d in sorted(scan.dests[m]):
            if d in correct and d not in got:
                verdict.liveness_violations.append(LivenessViolation(m, scan.origin[m], d))
    sent = defaultdict(int)
    for m in scan.order:
        sent[scan.origin[m]] += 1
    requests = defaultdict(list)
    for req in cfg.workload:
        requests[req.sender].append(req)
    for p in sorted(correct):
        for req in requests[p][sent[p]:]:
            for d in sorted(req.dests):
                if d in correct:
                    verdict.liveness_violations.append(LivenessViolation(None, p, d))
    return verdict


def cs_bound(delta_s: int, delta_r: int) -> int:
    return max(delta_s, delta_r + max(delta_s, delta_r))


def cs_bound_alt(delta_s: int, delta_r: int) -> int:
    """The looser form ``max(delta_s, 2*delta_r + delta_s)``."""
    return max(delta_s, 2 * delta_r + delta_s)


def check_cs_bound(trace, cfg: ScenarioConfig, delta_s: int | None = None,
                   delta_r: int | None = None) -> Verdict:
    """Queue delay (deliver minus push) of every app message at a correct process."""
    ds = cfg.effective_delta_s if delta_s is None else delta_s
    dr = cfg.delta_r if delta_r is None else delta_r
    bound, alt = cs_bound(ds, dr), cs_bound_alt(ds, dr)
    verdict = Verdict()
    correct = set(cfg.correct)
    pushed: dict[int, tuple[int, int, str]] = {}
    worst = 0
    for ev in trace:
        env = ev.envelope
        if ev.process not in correct or env is None or env.kind != "app":
            continue
        if ev.kind == "push":
            pushed[env.id] = (ev.time, ev.process, env.msg)
        elif ev.kind == "deliver" and env.id in pushed:
            t0, p, m = pushed.pop(env.id)
            delay = ev.time - t0
            worst = max(worst, delay)
            if delay > bound:
                verdict.bound_violations.append(BoundViolation(m, p, delay, bound))
    end = cfg.horizon
    for t0, p, m in pushed.values():
        if end - t0 > bound:
            verdict.bound_violations.append(BoundViolation(m, p, end - t0, bound))
            worst = max(worst, end - t0)
    verdict.max_observed_delay = worst
    if verdict.bound_violations:
        held = worst <= alt
        verdict.notes.append(f"bound {bound} exceeded (max {worst}); "
                             f"looser bound {alt} {'held' if held else 'also exceeded'}")
    return verdict


def check_early_deletes(trace, cfg: ScenarioConfig) -> Verdict:
    """Delivered-controls about correct pairs deleted before their sent-control was dequeued."""
    verdict = Verdict()
    correct = set(cfg.correct)
    popped_sent: set[tuple] = set()
    for ev in trace:
        env = ev.envelope
        if ev.process not in correct or env is None or env.kind != "control":
            continue
        if ev.kind == "pop" and env.tag == "sent":
            popped_sent.add((ev.process, env.actor, env.seq))
        elif ev.kind == "delete" and env.tag == "delivered":
            sender, receiver = env.subject, env.actor
            if sender not in correct or receiver not in correct:
                continue
            if (ev.process, sender, env.seq) not in popped_sent:
                verdict.early_deletes.append(
                    EarlyDelete(ev.process, receiver, sender, env.seq.as_list()))
    return verdict


_TIMER_ID = re.compile(r"timer=(\d+)")


def lock_holds(trace) -> list[tuple[int, str, int, int]]:
    """(process, message, acquired, released) for every Sender-Inhibition lock."""
    open_locks: dict[int, tuple[int, str, int]] = {}
    out = []
    for ev in trace:
        if ev.kind == "timer_start" and " lock " in f" {ev.detail} ":
            tid = int(_TIMER_ID.search(ev.detail).group(1))
            msg = ev.detail.rsplit("lock ", 1)[1]
            open_locks[tid] = (ev.process, msg, ev.time)
        elif ev.kind in ("timer_stop", "timeout") and ev.detail:
            found = _TIMER_ID.search(ev.detail)
            if found and int(found.group(1)) in open_locks and "noop" not in ev.detail:
                p, msg, t0 = open_locks.pop(int(found.group(1)))
                out.append((p, msg, t0, ev.time))
    return out


def check_lock_holds(trace, cfg: ScenarioConfig) -> Verdict:
    verdict = Verdict()
    limit = 2 * cfg.delta
    correct = set(cfg.correct)
    for p, msg, t0, t1 in lock_holds(trace):
        if p in correct and t1 - t0 > limit:
            verdict.bound_violations.append(BoundViolation(msg, p, t1 - t0, limit, "lock"))
    return verdict


def relation_for(trace, cfg: ScenarioConfig) -> CausalRelation:
    if cfg.protocol == "rst":
        return build_hb(trace)
    return build_bhb(trace, cfg.byzantine)


def evaluate(trace, cfg: ScenarioConfig, relation: CausalRelation | None = None) -> Verdict:
    """Full verdict: safety, liveness and the protocol-specific timing checks."""
    relation = relation_for(trace, cfg) if relation is None else relation
    verdict = check_safety(trace, relation, cfg.correct)
    verdict.merge(check_liveness(trace, cfg))
    if cfg.protocol == "channel_sync":
        verdict.merge(check_cs_bound(trace, cfg))
        if cfg.delta_r >= cfg.delta:
            verdict.merge(check_early_deletes(trace, cfg))
    elif cfg.protocol == "sender_inhibition":
        verdict.merge(check_lock_holds(trace, cfg))
    if cfg.protocol != "rst" and cfg.byzantine:
        verdict.notes.append("messages of each source ordered by the source's send order")
    return verdict


# -- mutation ---------------------------------------------------------------------------


def plant_inversion(trace: Trace, relation: CausalRelation, correct: Iterable[int],
                    rng: random.Random) -> Trace | None:
    """Move the earlier delivery of one related pair to just after the later one.

    The moved event takes the later delivery's time, so the mutated trace
    stays well formed (monotone, nothing delivered before it was sent).
    Only pairs with no app send by the destination in between qualify:
    moving a delivery past such a send would change the relation itself.

    Returns ``None`` when the trace offers no qualifying pair.
    """
    correct = set(correct)
    positions: dict[int, dict[str, int]] = defaultdict(dict)
    sends: dict[int, list[int]] = defaultdict(list)
    for pos, ev in enumerate(trace.events):
        if ev.kind == "deliver" and ev.process in correct:
            positions[ev.process].setdefault(ev.envelope.msg, pos)
        elif ev.kind == "send" and ev.envelope is not None and ev.envelope.kind == "app":
            sends[ev.process].append(pos)
    candidates = []
    for d in sorted(positions):
        at = positions[d]
        for m2, p2 in at.items():
            if m2 not in relation.index:
                continue
            for m1 in relation.predecessors(m2):
                p1 = at.get(m1)
                if p1 is not None and p1 < p2 and not any(p1 < x < p2 for x in sends[d]):
                    candidates.append((p1, p2))
    if not candidates:
        return None
    p1, p2 = rng.choice(sorted(candidates))
    events = list(trace.events)
    e1 = events.pop(p1)
    moved = TraceEvent(events[p2 - 1].time, e1.process, e1.kind, e1.envelope, e1.detail)
    events.insert(p2, moved)
    return Trace(trace.config, events)
