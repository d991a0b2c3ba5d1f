"""Sender-Inhibition: one outstanding send per process, released by acks or a 2*delta timeout.

Receivers push arrivals into a FIFO queue, ack them immediately, and
deliver from the queue head.  A sender holds a lock from the moment it
sends until every destination has acked or ``2 * delta`` ticks have
passed, whichever comes first.  Application sends issued while the lock
is held wait in a backlog and go out in issue order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import AckBody, AppPayload, Envelope, Kind, ProcessId, SendRequest
from .simnet import Context, Process, TimerHandle


@dataclass
class InFlight:
    msg: str
    dests: frozenset
    awaiting: set
    timer: TimerHandle
    sent_at: int


@dataclass
class SiState:
    me: ProcessId
    q: deque = field(default_factory=deque)
    in_flight: InFlight | None = None
    send_backlog: deque = field(default_factory=deque)
    lock_holds: list[tuple[str, int, int]] = field(default_factory=list)

    @property
    def lock_held(self) -> bool:
        return self.in_flight is not None


class SiProcess(Process):
    def __init__(self, me: ProcessId, n: int, *, multicast: bool = False):
        self.state = SiState(me)
        self.n = n
        self.multicast = multicast

    # send side -------------------------------------------------------------
    def si_send(self, ctx: Context, dest, payload=None) -> list[Envelope]:
        """Send to a process or group now if the lock is free, else backlog it."""
        dests = dest if isinstance(dest, frozenset) else frozenset([dest])
        st = self.state
        if st.lock_held:
            st.send_backlog.append((dests, payload))
            return []
        msg = ctx.new_msg_id()
        key = ctx.next_mcast_key() if self.multicast else None
        out = []
        for d in sorted(dests):
            seq = ctx.next_pair_seq(d)
            body = AppPayload(msg=msg, seq=seq, key=key or seq, data=payload,
                              group=dests if self.multicast else None)
            env = ctx.send(d, Kind.APP, body)
            if env is not None:
                out.append(env)
        timer = ctx.start_timer(2 * ctx.cfg.delta, out[0] if out else None, f"lock {msg}")
        st.in_flight = InFlight(msg, dests, set(dests), timer, ctx.now)
        return out

    def on_request(self, ctx: Context, req: SendRequest) -> None:
        self.si_send(ctx, req.dest if self.multicast else next(iter(req.dests)), req.payload)

    def _release(self, ctx: Context) -> None:
        st = self.state
        fl = st.in_flight
        st.lock_holds.append((fl.msg, fl.sent_at, ctx.now))
        st.in_flight = None
        if st.send_backlog:
            dests, payload = st.send_backlog.popleft()
            self.si_send(ctx, dests, payload)

    def on_timeout(self, ctx: Context, timer: TimerHandle) -> None:
        fl = self.state.in_flight
        if fl is None or timer is not fl.timer:
            return
        self._release(ctx)

    # receive side ------------------------------------------------------------
    def on_arrival(self, ctx: Context, env: Envelope) -> None:
        if env.kind is Kind.APP:
            self.state.q.append(env)
            ctx.record("push", env)
            ctx.send(env.origin, Kind.ACK, AckBody(env.body.msg, env.body.seq))
            if ctx.cfg.app_ready_delay:
                ctx.wake_at(ctx.now + ctx.cfg.app_ready_delay, "deliver")
            else:
                self.si_deliver_next(ctx)
        elif env.kind is Kind.ACK:
            fl = self.state.in_flight
            if fl is None or env.body.msg != fl.msg or env.origin not in fl.awaiting:
                ctx.record("drop", env, "stale or unsolicited ack")
                return
            fl.awaiting.discard(env.origin)
            if not fl.awaiting:
                ctx.stop_timer(fl.timer, "all acks in")
                self._release(ctx)
        else:
            ctx.record("drop", env, "unexpected envelope kind")

    def on_wake(self, ctx: Context, token) -> None:
        if token == "deliver":
            self.si_deliver_next(ctx)

    def si_deliver_next(self, ctx: Context) -> Envelope | None:
        if not self.state.q:
            return None
        env = self.state.q.popleft()
        ctx.record("pop", env)
        ctx.deliver(env)
        return env
