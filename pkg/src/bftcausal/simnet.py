"""Deterministic discrete-event network simulator.

Channels are per ordered pair and FIFO; every envelope takes between
``min_delay`` and ``delta`` ticks.  Events at the same tick run in phase
order (arrivals and scheduled requests first, then timeouts), and within a
phase in global emission order.  A run is a pure function of the scenario
configuration, seed included.
"""

from __future__ import annotations

import heapq
import io
import itertools
import json
import random
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .core import (
    Body,
    Envelope,
    EnvelopeRecord,
    Kind,
    PairSeq,
    ProcessId,
    ScenarioConfig,
    SendRequest,
    SimTime,
    TraceEvent,
)

# Same-tick phases.  Arrivals win over timeouts at the same tick, which makes
# every "within 2*delta" / "within delta_r" wait inclusive of its bound.
PHASE_MESSAGE = 0
PHASE_TIMER = 1


class SimulationError(RuntimeError):
    """A protocol or engine contract was broken during a run."""


class SimulationAborted(SimulationError):
    """A handler raised; ``trace`` holds everything recorded up to the failure."""

    def __init__(self, message: str, trace: "Trace"):
        super().__init__(message)
        self.trace = trace


@dataclass(eq=False)
class TimerHandle:
    id: int
    owner: ProcessId
    started_at: SimTime
    fires_at: SimTime
    subject: EnvelopeRecord | None
    stopped: bool = False
    fired: bool = False
    detail: str = ""

    @property
    def active(self) -> bool:
        return not (self.stopped or self.fired)


class Process:
    """Handler interface; a protocol overrides what it needs."""

    def start(self, ctx: "Context") -> None:
        pass

    def on_request(self, ctx: "Context", req: SendRequest) -> None:
        pass

    def on_arrival(self, ctx: "Context", env: Envelope) -> None:
        pass

    def on_timeout(self, ctx: "Context", timer: TimerHandle) -> None:
        pass

    def on_wake(self, ctx: "Context", token: Any) -> None:
        pass


class Trace:
    """Ground-truth record of a run."""

    def __init__(self, config: ScenarioConfig | None, events: list[TraceEvent],
                 aborted: str | None = None):
        self.config = config
        self.events = events
        self.aborted = aborted

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def to_jsonl(self) -> str:
        buf = io.StringIO()
        for ev in self.events:
            buf.write(json.dumps(ev.to_json(), separators=(",", ":")))
            buf.write("\n")
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str, config: ScenarioConfig | None = None) -> "Trace":
        events = [TraceEvent.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(config, events)

    def by_kind(self, *kinds: str) -> list[TraceEvent]:
        return [ev for ev in self.events if ev.kind in kinds]


class Context:
    """A process's view of the engine: its clock, its channels, its timers."""

    def __init__(self, engine: "Engine", me: ProcessId):
        self.engine = engine
        self.me = me

    @property
    def now(self) -> SimTime:
        return self.engine.now

    @property
    def n(self) -> int:
        return self.engine.cfg.n

    @property
    def cfg(self) -> ScenarioConfig:
        return self.engine.cfg

    def send(self, dest: ProcessId, kind: Kind, body: Body, origin: ProcessId | None = None):
        return self.engine.schedule_send(self.me if origin is None else origin, dest, kind, body,
                                         emitter=self.me)

    def start_timer(self, duration: int, subject: Envelope | None = None, detail: str = "") -> TimerHandle:
        return self.engine.start_timer(self.me, duration, subject, detail)

    def stop_timer(self, handle: TimerHandle, detail: str = "") -> None:
        self.engine.stop_timer(handle, detail)

    def wake_at(self, time: SimTime, token: Any, phase: int = PHASE_MESSAGE) -> None:
        self.engine.wake_at(self.me, time, token, phase)

    def deliver(self, env: Envelope, detail: str = "") -> None:
        self.engine.record(self.me, "deliver", env.record(), detail)

    def record(self, kind: str, env: Envelope | EnvelopeRecord | None = None, detail: str = "") -> None:
        if isinstance(env, Envelope):
            env = env.record()
        self.engine.record(self.me, kind, env, detail)

    def new_msg_id(self) -> str:
        return self.engine.new_msg_id(self.me)

    def next_pair_seq(self, dest: ProcessId) -> PairSeq:
        return self.engine.next_pair_seq(self.me, dest)

    def next_mcast_key(self) -> PairSeq:
        return self.engine.next_mcast_key(self.me)


class Engine:
    def __init__(self, cfg: ScenarioConfig, processes: Mapping[ProcessId, Process] | None = None):
        self.cfg = cfg
        self.procs: dict[ProcessId, Process] = dict(processes or {})
        self.now: SimTime = 0
        self.events: list[TraceEvent] = []
        self._heap: list[tuple] = []
        self._counter = itertools.count()
        self._env_ids = itertools.count(1)
        self._timer_ids = itertools.count(1)
        self._rng = random.Random(cfg.seed)
        self._last_arrival: dict[tuple[int, int], SimTime] = {}
        self._msg_count: dict[ProcessId, int] = defaultdict(int)
        self._pair_count: dict[tuple[int, int], int] = defaultdict(int)
        self._mcast_count: dict[ProcessId, int] = defaultdict(int)
        self._contexts = {p: Context(self, p) for p in range(cfg.n)}

    def context(self, p: ProcessId) -> Context:
        return self._contexts[p]

    # -- identifiers -------------------------------------------------------
    def new_msg_id(self, p: ProcessId) -> str:
        self._msg_count[p] += 1
        return f"m{p}.{self._msg_count[p]}"

    def next_pair_seq(self, i: ProcessId, j: ProcessId) -> PairSeq:
        self._pair_count[(i, j)] += 1
        return PairSeq(i, j, self._pair_count[(i, j)])

    def next_mcast_key(self, i: ProcessId) -> PairSeq:
        self._mcast_count[i] += 1
        return PairSeq(i, None, self._mcast_count[i])

    # -- trace ---------------------------------------------------------------
    def record(self, process: ProcessId, kind: str, env: EnvelopeRecord | None = None,
               detail: str = "") -> None:
        self.events.append(TraceEvent(self.now, process, kind, env, detail))

    def trace(self, aborted: str | None = None) -> Trace:
        return Trace(self.cfg, list(self.events), aborted)

    # -- scheduling ----------------------------------------------------------
    def _enqueue(self, time: SimTime, phase: int, kind: str, payload) -> None:
        heapq.heappush(self._heap, (time, phase, next(self._counter), kind, payload))

    def draw_delay(self, i: ProcessId, j: ProcessId) -> int:
        cfg = self.cfg
        if cfg.delay_model == "fixed":
            d = cfg.delta if cfg.fixed_delay is None else cfg.fixed_delay
        elif cfg.delay_model == "adversarial_schedule" and (i, j) in cfg.schedule:
            d = cfg.schedule[(i, j)]
        else:
            d = self._rng.randint(cfg.min_delay, cfg.delta)
        return min(max(d, cfg.min_delay), cfg.delta)

    def schedule_send(self, origin: ProcessId, dest: ProcessId, kind: Kind, body: Body,
                      emitter: ProcessId | None = None) -> Envelope | None:
        emitter = origin if emitter is None else emitter
        if self.now > self.cfg.horizon:
            raise SimulationError(f"send at t={self.now} after horizon {self.cfg.horizon}")
        if origin == dest:
            raise SimulationError(f"process {origin} cannot send to itself")
        if not 0 <= dest < self.cfg.n:
            raise SimulationError(f"destination {dest} out of range")
        env = Envelope(next(self._env_ids), origin, dest, kind, body, self.now, self.now)
        if origin != emitter:
            env.origin = emitter
            self.record(emitter, "drop", env.record(), f"forged origin {origin}")
            return None
        arrive = self.now + self.draw_delay(origin, dest)
        arrive = max(arrive, self._last_arrival.get((origin, dest), arrive))
        self._last_arrival[(origin, dest)] = arrive
        env.arrive_at = arrive
        self.record(origin, "ack_sent" if kind is Kind.ACK else "send", env.record())
        self._enqueue(arrive, PHASE_MESSAGE, "arrival", env)
        return env

    def start_timer(self, owner: ProcessId, duration: int, subject: Envelope | None = None,
                    detail: str = "") -> TimerHandle:
        if duration < 0:
            raise SimulationError("timer duration must be >= 0")
        rec = subject.record() if subject is not None else None
        handle = TimerHandle(next(self._timer_ids), owner, self.now, self.now + duration, rec,
                             detail=detail)
        self.record(owner, "timer_start", rec, f"timer={handle.id} fires_at={handle.fires_at} {detail}".rstrip())
        self._enqueue(handle.fires_at, PHASE_TIMER, "timeout", handle)
        return handle

    def stop_timer(self, handle: TimerHandle, detail: str = "") -> None:
        if handle.stopped:
            return
        if handle.fired:
            self.record(handle.owner, "timer_stop", handle.subject,
                        f"timer={handle.id} noop: already fired")
            return
        handle.stopped = True
        self.record(handle.owner, "timer_stop", handle.subject, f"timer={handle.id} {detail}".rstrip())

    def wake_at(self, owner: ProcessId, time: SimTime, token: Any, phase: int = PHASE_MESSAGE) -> None:
        self._enqueue(max(time, self.now), phase, "wake", (owner, token))

    # -- main loop -----------------------------------------------------------
    def run(self) -> Trace:
        for req in self.cfg.workload:
            self._enqueue(req.time, PHASE_MESSAGE, "request", req)
        try:
            for p in sorted(self.procs):
                self.procs[p].start(self._contexts[p])
            while self._heap:
                time, _, _, kind, payload = heapq.heappop(self._heap)
                if time > self.cfg.horizon:
                    break
                self.now = time
                self._dispatch(kind, payload)
        except Exception as exc:
            raise SimulationAborted(f"{type(exc).__name__}: {exc}",
                                    self.trace(aborted=str(exc))) from exc
        return self.trace()

    def _dispatch(self, kind: str, payload) -> None:
        if kind == "arrival":
            env: Envelope = payload
            self.record(env.dest, "arrive", env.record())
            proc = self.procs.get(env.dest)
            if proc is not None:
                proc.on_arrival(self._contexts[env.dest], env)
        elif kind == "timeout":
            handle: TimerHandle = payload
            if handle.stopped:
                return
            handle.fired = True
            self.record(handle.owner, "timeout", handle.subject, f"timer={handle.id}")
            proc = self.procs.get(handle.owner)
            if proc is not None:
                proc.on_timeout(self._contexts[handle.owner], handle)
        elif kind == "request":
            req: SendRequest = payload
            proc = self.procs.get(req.sender)
            if proc is not None:
                proc.on_request(self._contexts[req.sender], req)
        elif kind == "wake":
            owner, token = payload
            proc = self.procs.get(owner)
            if proc is not None:
                proc.on_wake(self._contexts[owner], token)
        else:  # pragma: no cover
            raise SimulationError(f"unknown event kind {kind}")


def run(cfg: ScenarioConfig, processes: Mapping[ProcessId, Process]) -> Trace:
    return Engine(cfg, processes).run()


def app_envelopes(events: Iterable[TraceEvent], kind: str = "send"):
    return [ev for ev in events if ev.kind == kind and ev.envelope is not None
            and ev.envelope.kind == "app"]


__all__ = [
    "Context", "Engine", "Process", "SimulationAborted", "SimulationError",
    "TimerHandle", "Trace", "run", "PHASE_MESSAGE", "PHASE_TIMER",
]
