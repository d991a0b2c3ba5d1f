"""Matrix-clock causal ordering for point-to-point messages.

Every process keeps an n x n matrix ``M`` where ``M[j][k]`` is the number
of messages p_j is known to have sent to p_k, plus a vector of delivery
counts per source.  A message carries a copy of the sender's matrix taken
before the send is counted, and is delivered at p_i once every message
addressed to p_i in its recorded past has been delivered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AppPayload, Envelope, Kind, ProcessId, SendRequest
from .simnet import Context, Process

_SATURATE = np.iinfo(np.int64).max


class MatrixClock:
    """Send-count matrix.  Entries are int64 and saturate instead of wrapping."""

    __slots__ = ("m",)

    def __init__(self, m: np.ndarray):
        self.m = m

    @classmethod
    def zeros(cls, n: int) -> "MatrixClock":
        return cls(np.zeros((n, n), dtype=np.int64))

    @classmethod
    def of(cls, rows) -> "MatrixClock":
        return cls(np.array(rows, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.m.shape[0]

    def copy(self) -> "MatrixClock":
        return MatrixClock(self.m.copy())

    def merge(self, other: "MatrixClock") -> None:
        np.maximum(self.m, other.m, out=self.m)

    def __getitem__(self, ij):
        return int(self.m[ij])

    def __setitem__(self, ij, value: int) -> None:
        self.m[ij] = min(int(value), _SATURATE)

    def __eq__(self, other) -> bool:
        return isinstance(other, MatrixClock) and np.array_equal(self.m, other.m)

    def __le__(self, other: "MatrixClock") -> bool:
        return bool(np.all(self.m <= other.m))

    def __repr__(self) -> str:
        return f"MatrixClock({self.m.tolist()})"


@dataclass
class RstState:
    me: ProcessId
    n: int
    clock: MatrixClock = None
    delivered: np.ndarray = None
    pending: list[Envelope] = field(default_factory=list)

    def __post_init__(self):
        if self.clock is None:
            self.clock = MatrixClock.zeros(self.n)
        if self.delivered is None:
            self.delivered = np.zeros(self.n, dtype=np.int64)

    def stamp(self, dest: ProcessId) -> MatrixClock:
        """Piggyback for a send to ``dest``: the clock *before* the send is counted."""
        if dest == self.me:
            raise ValueError("self-sends are not part of the model")
        piggyback = self.clock.copy()
        self.clock[self.me, dest] = self.clock[self.me, dest] + 1
        return piggyback

    def deliverable(self, stamp: MatrixClock) -> bool:
        return bool(np.all(stamp.m[:, self.me] <= self.delivered))

    def apply_delivery(self, origin: ProcessId, stamp: MatrixClock) -> None:
        if not self.deliverable(stamp):
            raise AssertionError(f"p{self.me}: delivery precondition violated for message from p{origin}")
        self.delivered[origin] += 1
        self.clock.merge(stamp)

    def drain(self) -> list[Envelope]:
        """Deliver every pending message that has become deliverable.

        Pending messages are scanned in arrival order; after each delivery
        the scan restarts from the oldest message.
        """
        out = []
        progress = True
        while progress:
            progress = False
            for idx, env in enumerate(self.pending):
                if self.deliverable(env.body.clock):
                    del self.pending[idx]
                    self.apply_delivery(env.origin, env.body.clock)
                    out.append(env)
                    progress = True
                    break
        return out


def rst_send(state: RstState, dest: ProcessId, payload=None, *, msg: str = "", seq=None):
    """Pure form of the send step: returns (payload body, state)."""
    stamp = state.stamp(dest)
    return AppPayload(msg=msg, seq=seq, key=seq, data=payload, clock=stamp), state


def rst_deliverable(state: RstState, stamp: MatrixClock) -> bool:
    return state.deliverable(stamp)


def rst_deliver(state: RstState, env: Envelope) -> list[Envelope]:
    """Deliver ``env`` (precondition: deliverable) and cascade through pending."""
    state.apply_delivery(env.origin, env.body.clock)
    return [env] + state.drain()


class RstProcess(Process):
    def __init__(self, me: ProcessId, n: int):
        self.state = RstState(me, n)
        # hook for adversaries: rewrite the outgoing piggyback
        self.forge = None

    def send(self, ctx: Context, dest: ProcessId, data=None) -> Envelope | None:
        seq = ctx.next_pair_seq(dest)
        body, _ = rst_send(self.state, dest, data, msg=ctx.new_msg_id(), seq=seq)
        if self.forge is not None:
            body.clock = self.forge(ctx, dest, body.clock)
        return ctx.send(dest, Kind.APP, body)

    def on_request(self, ctx: Context, req: SendRequest) -> None:
        for dest in sorted(req.dests):
            self.send(ctx, dest, req.payload)

    def on_arrival(self, ctx: Context, env: Envelope) -> None:
        if env.kind is not Kind.APP:
            ctx.record("drop", env, "unexpected envelope kind")
            return
        self.state.pending.append(env)
        for delivered in self.state.drain():
            ctx.deliver(delivered)
