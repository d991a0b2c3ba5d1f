"""Scriptable Byzantine behaviour.

A Byzantine process wraps an honest protocol instance.  Every envelope the
honest code tries to send passes through the script first, which may
drop, rewrite or add envelopes.  Scripts act only through their own
process's context: channels, other processes' timers and envelope origins
stay under the simulator's control, so forging an origin is dropped by the
engine and recorded as a ``drop`` event.
"""

from __future__ import annotations

import itertools
from typing import Any, Iterable

from .core import AdversaryScript, AppPayload, ControlBody, Envelope, Kind, PairSeq, ProcessId, Tag
from .rst import MatrixClock, RstProcess
from .simnet import Context, Process, TimerHandle

# Phantom controls number their messages from here so they never collide
# with a real message on the same pair.
PHANTOM_BASE = 1_000_000


def boost_attack(true_clock: MatrixClock, pair: tuple[int, int], d: int) -> MatrixClock:
    """Claim ``d`` more messages on ``pair`` than were really sent."""
    if d <= 0:
        raise ValueError("boost amount must be positive")
    i, l = pair
    forged = true_clock.copy()
    forged[i, l] = true_clock[i, l] + d
    return forged


def shrink_attack(true_clock: MatrixClock, entry: tuple[int, int], by: int = 1) -> MatrixClock:
    """Hide ``by`` messages on ``entry``; refuses to go below zero."""
    i, k = entry
    if by <= 0:
        raise ValueError("shrink amount must be positive")
    if true_clock[i, k] < by:
        raise ValueError(f"entry ({i},{k}) is {true_clock[i, k]}: nothing to hide")
    forged = true_clock.copy()
    forged[i, k] = true_clock[i, k] - by
    return forged


class Behavior:
    """Honest pass-through; subclasses override the hooks they need."""

    def __init__(self, params: dict | None = None):
        self.params = dict(params or {})

    def alive(self, now: int) -> bool:
        return True

    def drives_inner(self) -> bool:
        return True

    def start(self, proxy: "ScriptContext", inner: Process) -> None:
        pass

    def transform(self, proxy: "ScriptContext", dest, kind: Kind, body, origin):
        return [(dest, kind, body, origin)]

    def on_wake(self, proxy: "ScriptContext", token) -> None:
        pass


class SilentAck(Behavior):
    def transform(self, proxy, dest, kind, body, origin):
        return [] if kind is Kind.ACK else [(dest, kind, body, origin)]


class WithholdDelivered(Behavior):
    def transform(self, proxy, dest, kind, body, origin):
        if kind is Kind.CONTROL and body.tag is Tag.DELIVERED:
            return []
        return [(dest, kind, body, origin)]


class CrashAt(Behavior):
    def __init__(self, params=None):
        super().__init__(params)
        self.at = int(self.params.get("time", self.params.get("at", 0)))

    def alive(self, now: int) -> bool:
        return now < self.at


class Silent(CrashAt):
    def __init__(self, params=None):
        super().__init__({"time": 0})


class PhantomSent(Behavior):
    """Honest, plus sent-controls announcing messages that were never sent.

    ``per_send`` phantoms follow each real app send; ``times`` adds bursts
    at fixed ticks.  Phantom subjects rotate over the other processes.
    """

    def __init__(self, params=None):
        super().__init__(params)
        self.per_send = int(self.params.get("per_send", 1))
        self.times = [int(t) for t in self.params.get("times", [])]
        self._counter = itertools.count(PHANTOM_BASE)
        self._last_msg = None
        self._rotation = 0

    def start(self, proxy, inner):
        for t in self.times:
            proxy.script_wake_at(t, ("phantom",))

    def on_wake(self, proxy, token):
        if token == ("phantom",):
            self._emit(proxy)

    def transform(self, proxy, dest, kind, body, origin):
        out = [(dest, kind, body, origin)]
        if kind is Kind.APP and body.msg != self._last_msg:
            self._last_msg = body.msg
            for _ in range(self.per_send):
                out.extend(self._phantoms(proxy))
        return out

    def _phantoms(self, proxy):
        me, n = proxy.me, proxy.n
        others = [p for p in range(n) if p != me]
        subject = others[self._rotation % len(others)]
        self._rotation += 1
        k = next(self._counter)
        multicast = proxy.cfg.multicast
        hide = multicast and proxy.cfg.mcast_hide_group
        seq = PairSeq(me, None, k) if multicast else PairSeq(me, subject, k)
        out = []
        for x in others:
            if not multicast and x == subject:
                continue
            subj = x if hide else (frozenset([subject]) if multicast else subject)
            out.append((x, Kind.CONTROL, ControlBody(Tag.SENT, me, subj, seq), None))
        return out

    def _emit(self, proxy):
        for dest, kind, body, origin in self._phantoms(proxy):
            proxy.raw_send(dest, kind, body, origin)


class _ClockForger(Behavior):
    """Shared plumbing for matrix-clock forgeries."""

    def start(self, proxy, inner):
        if isinstance(inner, RstProcess):
            inner.forge = self.forge

    def applies(self, dest) -> bool:
        dests = self.params.get("dests")
        return dests is None or dest in dests

    def forge(self, ctx, dest, clock: MatrixClock) -> MatrixClock:
        return clock


class Boost(_ClockForger):
    """Inflate chosen entries of every outgoing matrix timestamp by ``d``.

    ``pairs`` lists (i, l) entries, or ``"all"`` for every entry outside the
    destination's own column.
    """

    def forge(self, ctx, dest, clock):
        if not self.applies(dest):
            return clock
        d = int(self.params.get("d", 1))
        pairs = self.params.get("pairs", "all")
        if pairs == "all":
            # leave the receiver's own column alone so the forged stamp is
            # delivered, merged and passed on
            pairs = [(i, l) for i in range(clock.n) for l in range(clock.n)
                     if i != l and l != dest]
        for i, l in pairs:
            clock = boost_attack(clock, (int(i), int(l)), d)
        return clock


class Shrink(_ClockForger):
    """Deflate chosen entries of outgoing timestamps; zero entries are left alone."""

    def forge(self, ctx, dest, clock):
        if not self.applies(dest):
            return clock
        by = int(self.params.get("by", 1))
        for i, k in self.params.get("entries", []):
            try:
                clock = shrink_attack(clock, (int(i), int(k)), by)
            except ValueError:
                pass
        return clock


class CustomSchedule(Behavior):
    """Emit hand-written envelopes at fixed ticks.

    ``emissions`` is a list of mappings with ``time``, ``dest``, ``kind``
    and, for controls, ``tag``/``actor``/``subject``/``seq``; for apps,
    ``seq`` and optional ``msg``/``key``/``group``.  ``origin`` may name a
    different process to attempt an impersonation.  With ``honest`` the
    wrapped protocol keeps running; otherwise it is never driven.
    """

    def __init__(self, params=None):
        super().__init__(params)
        self.emissions = list(self.params.get("emissions", []))
        self.honest = bool(self.params.get("honest", False))

    def drives_inner(self) -> bool:
        return self.honest

    def start(self, proxy, inner):
        for idx, em in enumerate(self.emissions):
            proxy.script_wake_at(int(em["time"]), ("custom", idx))

    def on_wake(self, proxy, token):
        if isinstance(token, tuple) and token[0] == "custom":
            em = self.emissions[token[1]]
            proxy.raw_send(int(em["dest"]), *build_body(proxy, em), em.get("origin"))


def build_body(proxy: "ScriptContext", em: dict):
    kind = Kind(em["kind"])
    seq = PairSeq.from_list(em["seq"]) if "seq" in em else None
    if kind is Kind.CONTROL:
        subject = em["subject"]
        subject = frozenset(subject) if isinstance(subject, (list, tuple, set, frozenset)) else int(subject)
        return kind, ControlBody(Tag(em["tag"]), int(em.get("actor", proxy.me)), subject, seq)
    if kind is Kind.APP:
        if seq is None:
            seq = proxy.next_pair_seq(int(em["dest"]))
        key = PairSeq.from_list(em["key"]) if "key" in em else seq
        group = frozenset(em["group"]) if "group" in em else None
        msg = em.get("msg") or proxy.new_msg_id()
        return kind, AppPayload(msg, seq, key, em.get("payload"), group=group,
                                clock=em.get("clock"))
    from .core import AckBody
    return kind, AckBody(em.get("msg", ""), seq)


BEHAVIORS = {
    "silent_ack": SilentAck,
    "withhold_delivered": WithholdDelivered,
    "crash_at": CrashAt,
    "silent": Silent,
    "phantom_sent": PhantomSent,
    "boost": Boost,
    "shrink": Shrink,
    "custom_schedule": CustomSchedule,
}


class ScriptContext:
    """Context handed to the wrapped honest code: every send goes through the script."""

    def __init__(self, ctx: Context, behavior: Behavior):
        self._ctx = ctx
        self._behavior = behavior
        self.emitted: list[Envelope] = []

    def __getattr__(self, name):
        return getattr(self._ctx, name)

    def send(self, dest, kind, body, origin=None):
        first = None
        for d, k, b, o in self._behavior.transform(self, dest, kind, body, origin):
            env = self.raw_send(d, k, b, o)
            if first is None and d == dest and k is kind:
                first = env
        return first

    def raw_send(self, dest, kind, body, origin=None):
        env = self._ctx.send(dest, kind, body, origin)
        if env is not None:
            self.emitted.append(env)
        return env

    def script_wake_at(self, time, token):
        """Wake the script itself; the wrapped protocol's wakes pass through untouched."""
        self._ctx.wake_at(time, ("byz", token))


class ByzantineProcess(Process):
    def __init__(self, inner: Process, script: AdversaryScript):
        if script.name not in BEHAVIORS:
            raise ValueError(f"unknown adversary script {script.name!r}")
        self.inner = inner
        self.script = script
        self.behavior = BEHAVIORS[script.name](script.params)

    def drive(self, ctx: Context, event: tuple[str, Any]) -> list[Envelope]:
        """Run one inbox event through the script; returns what was actually sent."""
        kind, payload = event
        proxy = ScriptContext(ctx, self.behavior)
        if not self.behavior.alive(ctx.now):
            return []
        if kind == "start":
            self.behavior.start(proxy, self.inner)
            if self.behavior.drives_inner():
                self.inner.start(proxy)
            return proxy.emitted
        if kind == "wake" and isinstance(payload, tuple) and payload and payload[0] == "byz":
            self.behavior.on_wake(proxy, payload[1])
            return proxy.emitted
        if not self.behavior.drives_inner():
            return []
        handler = {
            "request": self.inner.on_request,
            "arrival": self.inner.on_arrival,
            "timeout": self.inner.on_timeout,
            "wake": self.inner.on_wake,
        }[kind]
        handler(proxy, payload)
        return proxy.emitted

    def start(self, ctx):
        self.drive(ctx, ("start", None))

    def on_request(self, ctx, req):
        self.drive(ctx, ("request", req))

    def on_arrival(self, ctx, env):
        self.drive(ctx, ("arrival", env))

    def on_timeout(self, ctx, timer: TimerHandle):
        self.drive(ctx, ("timeout", timer))

    def on_wake(self, ctx, token):
        self.drive(ctx, ("wake", token))


def drive(script: AdversaryScript, process: "ByzantineProcess", ctx: Context, event) -> list[Envelope]:
    return process.drive(ctx, event)


def wrap(inner: Process, script: AdversaryScript) -> ByzantineProcess:
    return ByzantineProcess(inner, script)


def all_pairs(n: int) -> Iterable[tuple[int, int]]:
    return [(i, l) for i in range(n) for l in range(n) if i != l]
