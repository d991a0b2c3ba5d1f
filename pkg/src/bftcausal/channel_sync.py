"""Channel Sync: per-source FIFO queues synchronised by sent/delivered controls.

A process p keeps one FIFO queue per other process.  Sending a message
also announces it to every third party with a *sent-control*; delivering a
message announces the delivery with a *delivered-control*.  At p:

* an app message at a queue head is delivered immediately;
* a delivered-control at a queue head blocks its queue until its timer
  (``delta_r``) expires, or, if the matching sent-control showed up first,
  until that sent-control has been dequeued from the sender's queue;
* a sent-control at a queue head blocks for at most ``delta_s`` and, when
  popped with matches recorded, deletes the matching delivered-controls.

Blocked heads are *parked*: the queue keeps its head in a ``popped`` slot
while all other queues continue.  Parked entries are re-examined after every
handler invocation at the process (timer stop/expiry, arrivals, head changes).

Multicast sends announce the whole group in the sent-control, which then
tracks the members whose delivered-controls are still outstanding.  With
``hide_group`` the group is not announced, so sent-controls cannot be
stopped and effectively use ``delta_s = 0``.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field

from .core import AppPayload, ControlBody, Envelope, Kind, PairSeq, ProcessId, SendRequest, Tag
from .simnet import PHASE_TIMER, Context, Process, SimulationError, TimerHandle


@dataclass(eq=False)
class CsQueueEntry:
    envelope: Envelope
    source: ProcessId
    timer: TimerHandle | None = None
    state: str = "queued"  # queued | popped_waiting | done
    group_remaining: set | None = None
    matched: list = field(default_factory=list)  # delivered-controls tied to a sent-control
    partner: "CsQueueEntry | None" = None  # sent-control tied to a delivered-control
    flag_stopped: bool = False
    flag_expired: bool = False

    @property
    def body(self):
        return self.envelope.body

    @property
    def is_app(self) -> bool:
        return self.envelope.kind is Kind.APP

    @property
    def stopped(self) -> bool:
        return self.timer.stopped if self.timer is not None else self.flag_stopped

    @property
    def expired(self) -> bool:
        return self.timer.fired if self.timer is not None else self.flag_expired


class CsProcess(Process):
    def __init__(self, me: ProcessId, n: int, *, multicast: bool = False, hide_group: bool = False):
        self.me = me
        self.n = n
        self.multicast = multicast
        self.hide_group = multicast and hide_group
        self.queues: dict[ProcessId, deque[CsQueueEntry]] = {j: deque() for j in range(n) if j != me}
        self.popped: dict[ProcessId, CsQueueEntry | None] = {j: None for j in self.queues}
        self.sent_index: dict[PairSeq, list[CsQueueEntry]] = defaultdict(list)
        self.delivered_index: dict[PairSeq, list[CsQueueEntry]] = defaultdict(list)
        self.self_delivered: set[PairSeq] = set()

    # -- sending ---------------------------------------------------------------
    def cs_send(self, ctx: Context, dest: ProcessId, payload=None) -> list[Envelope]:
        if dest == self.me:
            raise ValueError("self-sends are not part of the model")
        seq = ctx.next_pair_seq(dest)
        out = [ctx.send(dest, Kind.APP, AppPayload(ctx.new_msg_id(), seq, seq, payload))]
        control = ControlBody(Tag.SENT, self.me, dest, seq)
        for x in range(self.n):
            if x not in (self.me, dest):
                out.append(ctx.send(x, Kind.CONTROL, control))
        return [e for e in out if e is not None]

    def cs_mcast_send(self, ctx: Context, group: frozenset, payload=None) -> list[Envelope]:
        if not group or self.me in group:
            raise ValueError("multicast group must be non-empty and exclude the sender")
        key = ctx.next_mcast_key()
        msg = ctx.new_msg_id()
        out = []
        for d in sorted(group):
            body = AppPayload(msg, ctx.next_pair_seq(d), key, payload, group=frozenset(group))
            out.append(ctx.send(d, Kind.APP, body))
        for x in range(self.n):
            if x != self.me:
                subject = x if self.hide_group else frozenset(group)
                out.append(ctx.send(x, Kind.CONTROL, ControlBody(Tag.SENT, self.me, subject, key)))
        return [e for e in out if e is not None]

    def on_request(self, ctx: Context, req: SendRequest) -> None:
        if self.multicast:
            self.cs_mcast_send(ctx, req.dests, req.payload)
        else:
            self.cs_send(ctx, next(iter(req.dests)), req.payload)
        self.pump(ctx)

    # -- arrivals ---------------------------------------------------------------
    def on_arrival(self, ctx: Context, env: Envelope) -> None:
        self.cs_on_arrival(ctx, env)
        self.pump(ctx)

    def cs_on_arrival(self, ctx: Context, env: Envelope) -> CsQueueEntry | None:
        if env.kind is Kind.ACK:
            ctx.record("drop", env, "unexpected ack")
            return None
        if env.kind is Kind.CONTROL and env.body.actor != env.origin:
            ctx.record("drop", env, "control actor differs from origin")
            return None
        entry = CsQueueEntry(env, env.origin)
        self.queues[env.origin].append(entry)
        ctx.record("push", env)
        if env.kind is Kind.CONTROL:
            if env.body.tag is Tag.SENT:
                self._start_timer(ctx, entry, ctx.cfg.effective_delta_s)
                self._match_sent(ctx, entry)
            else:
                self._start_timer(ctx, entry, ctx.cfg.delta_r)
                self._match_delivered(ctx, entry)
        return entry

    def _start_timer(self, ctx: Context, entry: CsQueueEntry, duration: int) -> None:
        if duration == 0 and ctx.cfg.zero_timer == "flag":
            # boolean stand-in for a zero-length timer; expires at the end of this tick
            ctx.wake_at(ctx.now, ("expire", entry), phase=PHASE_TIMER)
            return
        entry.timer = ctx.start_timer(duration, entry.envelope, entry.body.tag.value)

    def _stop(self, ctx: Context, entry: CsQueueEntry, why: str) -> None:
        if entry.timer is not None:
            ctx.stop_timer(entry.timer, why)
        elif not entry.flag_expired:
            entry.flag_stopped = True

    def _match_sent(self, ctx: Context, cms: CsQueueEntry) -> None:
        body: ControlBody = cms.body
        key = body.seq
        self.sent_index[key].append(cms)
        candidates = [r for r in self.delivered_index[key] if r.body.subject == body.actor]
        if not self.multicast:
            found = [r for r in candidates if r.body.actor == body.subject]
            if found:
                self._stop(ctx, cms, "matched")
                for r in found:
                    self._stop(ctx, r, "matched")
                    self._link(cms, r)
            return
        if self.hide_group:
            for r in candidates:
                self._stop(ctx, r, "matched")
                self._link(cms, r)
            return
        remaining = set(body.subject)
        for x in sorted(body.subject):
            if x == self.me:
                if key in self.self_delivered:
                    remaining.discard(x)
                continue
            found = [r for r in candidates if r.body.actor == x]
            if found:
                for r in found:
                    self._stop(ctx, r, "matched")
                    self._link(cms, r)
                remaining.discard(x)
        cms.group_remaining = remaining
        if not remaining:
            self._stop(ctx, cms, "group complete")

    def _match_delivered(self, ctx: Context, cmr: CsQueueEntry) -> None:
        body: ControlBody = cmr.body
        key = body.seq
        self.delivered_index[key].append(cmr)
        candidates = [c for c in self.sent_index[key] if c.body.actor == body.subject]
        if not self.multicast:
            candidates = [c for c in candidates if c.body.subject == body.actor]
            if candidates:
                cms = candidates[0]
                self._stop(ctx, cmr, "matched")
                self._stop(ctx, cms, "matched")
                self._link(cms, cmr)
            return
        if self.hide_group:
            if candidates:
                self._stop(ctx, cmr, "matched")
                self._link(candidates[0], cmr)
            return
        for cms in candidates:
            if body.actor not in cms.body.subject:
                continue
            self._stop(ctx, cmr, "matched")
            self._link(cms, cmr)
            if body.actor in cms.group_remaining:
                cms.group_remaining.discard(body.actor)
                if not cms.group_remaining:
                    self._stop(ctx, cms, "group complete")
            break

    @staticmethod
    def _link(cms: CsQueueEntry, cmr: CsQueueEntry) -> None:
        if cmr not in cms.matched:
            cms.matched.append(cmr)
        cmr.partner = cms

    # -- timers -------------------------------------------------------------------
    def on_timeout(self, ctx: Context, timer: TimerHandle) -> None:
        self.pump(ctx)

    def on_wake(self, ctx: Context, token) -> None:
        if isinstance(token, tuple) and token[0] == "expire":
            entry = token[1]
            if not entry.flag_stopped:
                entry.flag_expired = True
        self.pump(ctx)

    # -- queue processing -----------------------------------------------------------
    def pump(self, ctx: Context) -> list[Envelope]:
        """Advance every queue as far as it can go right now; returns deliveries."""
        delivered: list[Envelope] = []
        progress = True
        while progress:
            progress = False
            for j in self.queues:
                while self.cs_process_queue(ctx, j, delivered):
                    progress = True
        return delivered

    def cs_process_queue(self, ctx: Context, j: ProcessId, delivered: list | None = None) -> bool:
        """One step on ``Q_j``: finish the parked head or pop the next entry."""
        parked = self.popped[j]
        if parked is not None:
            return self._try_finish(ctx, parked)
        q = self.queues[j]
        if not q:
            return False
        entry = q.popleft()
        ctx.record("pop", entry.envelope)
        if entry.is_app:
            entry.state = "done"
            self._deliver(ctx, j, entry)
            if delivered is not None:
                delivered.append(entry.envelope)
            return True
        if any(e.state == "popped_waiting" for e in q):
            raise SimulationError(f"p{self.me}: two parked entries in Q{j}")
        entry.state = "popped_waiting"
        self.popped[j] = entry
        self._try_finish(ctx, entry)
        return True

    def _try_finish(self, ctx: Context, entry: CsQueueEntry) -> bool:
        if entry.state == "done":
            return True
        if entry.body.tag is Tag.DELIVERED:
            if entry.expired:
                self._delete(ctx, entry, "timed out")
                return True
            if entry.stopped:
                cms = entry.partner
                if cms is None or cms.state != "queued":
                    self._delete(ctx, entry, "sent-control dequeued")
                    return True
            return False
        if not (entry.stopped or entry.expired):
            return False
        if self.multicast and not self.hide_group:
            for r in list(entry.matched):
                self._delete(ctx, r, "deleted by sent-control")
        elif not self.multicast and entry.stopped:
            for r in list(entry.matched):
                self._delete(ctx, r, "deleted by sent-control")
        self._delete(ctx, entry, "processed")
        return True

    def _delete(self, ctx: Context, entry: CsQueueEntry, why: str) -> None:
        if entry.state == "done":
            return
        if entry.state == "popped_waiting":
            self.popped[entry.source] = None
        else:
            self.queues[entry.source].remove(entry)
        entry.state = "done"
        if entry.timer is not None and entry.timer.active:
            ctx.stop_timer(entry.timer, "deleted")
        index = self.sent_index if entry.body.tag is Tag.SENT else self.delivered_index
        bucket = index.get(entry.body.seq)
        if bucket is not None and entry in bucket:
            bucket.remove(entry)
        ctx.record("delete", entry.envelope, why)

    def _deliver(self, ctx: Context, j: ProcessId, entry: CsQueueEntry) -> None:
        body: AppPayload = entry.body
        ctx.deliver(entry.envelope)
        control = ControlBody(Tag.DELIVERED, self.me, j, body.key)
        for x in range(self.n):
            if x != j and x != self.me:
                ctx.send(x, Kind.CONTROL, control)
        if self.multicast:
            # the deliverer's own delivered-control: discharges itself locally
            self.self_delivered.add(body.key)
            if not self.hide_group:
                for cms in self.sent_index.get(body.key, []):
                    rem = cms.group_remaining
                    if cms.body.actor == j and rem is not None and self.me in rem:
                        rem.discard(self.me)
                        if not rem:
                            self._stop(ctx, cms, "group complete")
