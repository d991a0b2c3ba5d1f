"""Shared domain types, scenario configuration and the trace data model.

Time is measured in integer ticks.  Processes are identified by their index
in ``range(n)``; the total order on processes is the integer order.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

ProcessId = int
SimTime = int
SimDuration = int
GroupSet = frozenset  # frozenset[ProcessId]; non-empty

PROTOCOLS = ("rst", "sender_inhibition", "channel_sync")
DELAY_MODELS = ("fixed", "uniform_random", "adversarial_schedule")
SCRIPT_NAMES = (
    "boost",
    "shrink",
    "silent_ack",
    "phantom_sent",
    "withhold_delivered",
    "crash_at",
    "silent",
    "custom_schedule",
)


class ConfigError(ValueError):
    """Raised when a configuration cannot be parsed or is invalid."""

    def __init__(self, message: str, violations: list["Violation"] | None = None):
        super().__init__(message)
        self.violations = violations or []


@dataclass(frozen=True, order=True)
class PairSeq:
    """The k-th application message from ``sender`` to ``receiver``.

    ``receiver`` is ``None`` for multicast keys, where ``k`` counts the
    sender's multicast send events instead of a single ordered pair.
    """

    sender: ProcessId
    receiver: ProcessId | None
    k: int

    def as_list(self) -> list:
        return [self.sender, self.receiver, self.k]

    @classmethod
    def from_list(cls, raw) -> "PairSeq":
        sender, receiver, k = raw
        return cls(int(sender), None if receiver is None else int(receiver), int(k))


class Kind(str, Enum):
    APP = "app"
    CONTROL = "control"
    ACK = "ack"


class Tag(str, Enum):
    SENT = "sent"
    DELIVERED = "delivered"


@dataclass(eq=False)
class AppPayload:
    msg: str
    seq: PairSeq
    key: PairSeq  # matching identity used by control messages
    data: Any = None
    group: frozenset | None = None
    clock: Any = None  # piggybacked MatrixClock (RST only)


@dataclass(frozen=True)
class ControlBody:
    tag: Tag
    actor: ProcessId
    subject: Union[ProcessId, frozenset]
    seq: PairSeq


@dataclass(frozen=True)
class AckBody:
    msg: str
    seq: PairSeq


Body = Union[AppPayload, ControlBody, AckBody]


@dataclass(eq=False)
class Envelope:
    id: int
    origin: ProcessId
    dest: ProcessId
    kind: Kind
    body: Body
    sent_at: SimTime
    arrive_at: SimTime

    def record(self) -> "EnvelopeRecord":
        return EnvelopeRecord.of(self)


@dataclass(frozen=True)
class EnvelopeRecord:
    """Immutable, serialisable snapshot of an envelope as seen in a trace."""

    id: int
    origin: ProcessId
    dest: ProcessId
    kind: str
    tag: str | None = None
    actor: ProcessId | None = None
    subject: Union[ProcessId, tuple, None] = None
    seq: PairSeq | None = None
    msg: str | None = None

    @classmethod
    def of(cls, env: Envelope) -> "EnvelopeRecord":
        body = env.body
        if isinstance(body, ControlBody):
            subject = body.subject
            if isinstance(subject, frozenset):
                subject = tuple(sorted(subject))
            return cls(env.id, env.origin, env.dest, env.kind.value, body.tag.value,
                       body.actor, subject, body.seq, None)
        if isinstance(body, AckBody):
            return cls(env.id, env.origin, env.dest, env.kind.value, seq=body.seq, msg=body.msg)
        return cls(env.id, env.origin, env.dest, env.kind.value, seq=body.seq, msg=body.msg)

    def to_json(self) -> dict:
        subject = list(self.subject) if isinstance(self.subject, tuple) else self.subject
        return {
            "id": self.id,
            "origin": self.origin,
            "dest": self.dest,
            "kind": self.kind,
            "tag": self.tag,
            "actor": self.actor,
            "subject": subject,
            "seq": None if self.seq is None else self.seq.as_list(),
            "msg": self.msg,
        }

    @classmethod
    def from_json(cls, raw: Mapping) -> "EnvelopeRecord":
        subject = raw.get("subject")
        if isinstance(subject, list):
            subject = tuple(subject)
        seq = raw.get("seq")
        return cls(
            id=int(raw["id"]),
            origin=int(raw["origin"]),
            dest=int(raw["dest"]),
            kind=raw["kind"],
            tag=raw.get("tag"),
            actor=raw.get("actor"),
            subject=subject,
            seq=None if seq is None else PairSeq.from_list(seq),
            msg=raw.get("msg"),
        )

    @property
    def match_key(self) -> tuple:
        """Identity shared by a sent-control, its delivered-controls and the app message."""
        return (self.seq.sender, self.seq.receiver, self.seq.k)


TRACE_KINDS = (
    "send", "arrive", "push", "pop", "deliver", "ack_sent",
    "timer_start", "timer_stop", "timeout", "delete", "drop",
)


@dataclass(frozen=True)
class TraceEvent:
    time: SimTime
    process: ProcessId
    kind: str
    envelope: EnvelopeRecord | None = None
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "time": self.time,
            "process": self.process,
            "kind": self.kind,
            "envelope": None if self.envelope is None else self.envelope.to_json(),
            "detail": self.detail,
        }

    @classmethod
    def from_json(cls, raw: Mapping) -> "TraceEvent":
        env = raw.get("envelope")
        return cls(
            time=int(raw["time"]),
            process=int(raw["process"]),
            kind=raw["kind"],
            envelope=None if env is None else EnvelopeRecord.from_json(env),
            detail=raw.get("detail", ""),
        )


@dataclass(frozen=True)
class SendRequest:
    """A scripted application send: ``dest`` is a process or a group."""

    time: SimTime
    sender: ProcessId
    dest: Union[ProcessId, frozenset]
    payload: Any = None

    @property
    def dests(self) -> frozenset:
        return self.dest if isinstance(self.dest, frozenset) else frozenset([self.dest])


@dataclass(frozen=True)
class AdversaryScript:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    n: int
    protocol: str = "channel_sync"
    multicast: bool = False
    delta: SimDuration = 5
    delta_s: SimDuration = 0
    delta_r: SimDuration | None = None
    horizon: SimTime = 100
    seed: int = 0
    workload: list[SendRequest] = field(default_factory=list)
    byzantine: dict[ProcessId, AdversaryScript] = field(default_factory=dict)
    delay_model: str = "uniform_random"
    fixed_delay: SimDuration | None = None
    schedule: dict[tuple[int, int], int] = field(default_factory=dict)
    min_delay: SimDuration = 1
    mcast_hide_group: bool = False
    zero_timer: str = "timer"  # or "flag": boolean stand-in when delta_s == 0
    app_ready_delay: SimDuration = 0  # Sender-Inhibition delivery latency

    def __post_init__(self):
        if self.delta_r is None:
            self.delta_r = self.delta
        self.workload = sorted(self.workload, key=lambda r: r.time)

    @property
    def correct(self) -> list[ProcessId]:
        return [p for p in range(self.n) if p not in self.byzantine]

    @property
    def effective_delta_s(self) -> SimDuration:
        if self.multicast and self.mcast_hide_group:
            return 0
        return self.delta_s

    @property
    def workload_end(self) -> SimTime:
        return max((r.time for r in self.workload), default=0)

    def to_json(self) -> dict:
        def dest(d):
            return sorted(d) if isinstance(d, frozenset) else d

        return {
            "n": self.n,
            "protocol": self.protocol,
            "multicast": self.multicast,
            "delta": self.delta,
            "delta_s": self.delta_s,
            "delta_r": self.delta_r,
            "horizon": self.horizon,
            "seed": self.seed,
            "delay_model": self.delay_model,
            "fixed_delay": self.fixed_delay,
            "min_delay": self.min_delay,
            "mcast_hide_group": self.mcast_hide_group,
            "zero_timer": self.zero_timer,
            "app_ready_delay": self.app_ready_delay,
            "schedule": {f"{i}->{j}": d for (i, j), d in sorted(self.schedule.items())},
            "workload": [
                {"time": r.time, "sender": r.sender, "dest": dest(r.dest), "payload": r.payload}
                for r in self.workload
            ],
            "byzantine": {
                str(p): {"script": s.name, "params": dict(s.params)}
                for p, s in sorted(self.byzantine.items())
            },
        }


@dataclass(frozen=True)
class Violation:
    level: str  # "error" | "warning"
    field: str
    reason: str

    def __str__(self) -> str:
        return f"{self.level}: {self.field}: {self.reason}"


def validate_config(cfg: ScenarioConfig) -> list[Violation]:
    """Every invariant breach in ``cfg``; an empty list means valid.

    Warnings describe legal but premise-breaking settings; only errors make
    a configuration unrunnable.
    """
    out: list[Violation] = []

    def err(f, why):
        out.append(Violation("error", f, why))

    def warn(f, why):
        out.append(Violation("warning", f, why))

    if cfg.n < 2:
        err("n", f"need at least 2 processes, got {cfg.n}")
    if cfg.protocol not in PROTOCOLS:
        err("protocol", f"unknown protocol {cfg.protocol!r}")
    if cfg.delay_model not in DELAY_MODELS:
        err("delay_model", f"unknown delay model {cfg.delay_model!r}")
    if cfg.delta < 1:
        err("delta", "delta must be >= 1")
    if cfg.delta_s < 0:
        err("delta_s", "delta_s must be >= 0")
    if cfg.delta_r is None or cfg.delta_r < 0:
        err("delta_r", "delta_r must be >= 0")
    elif cfg.delta_r < cfg.delta:
        warn("delta_r", "delta_r < delta: a delivered-control can time out before "
                        "its sent-control arrives")
    if not 0 <= cfg.min_delay <= cfg.delta:
        err("min_delay", "min_delay must lie in [0, delta]")
    if cfg.fixed_delay is not None and not cfg.min_delay <= cfg.fixed_delay <= cfg.delta:
        err("fixed_delay", "fixed delay must lie in [min_delay, delta]")
    for (i, j), d in cfg.schedule.items():
        if not (0 <= i < cfg.n and 0 <= j < cfg.n) or i == j:
            err("schedule", f"bad channel {i}->{j}")
        if not cfg.min_delay <= d <= cfg.delta:
            err("schedule", f"delay {d} on {i}->{j} outside [min_delay, delta]")
    if cfg.zero_timer not in ("timer", "flag"):
        err("zero_timer", "zero_timer must be 'timer' or 'flag'")
    if cfg.app_ready_delay < 0:
        err("app_ready_delay", "must be >= 0")
    if cfg.protocol == "rst" and cfg.multicast:
        err("multicast", "the matrix-clock protocol is point-to-point only here")
    if cfg.mcast_hide_group and cfg.delta_s > 0:
        warn("mcast_hide_group", "hidden groups force delta_s to 0")

    if len(cfg.byzantine) > cfg.n:
        err("byzantine", "more Byzantine processes than processes")
    for p, script in cfg.byzantine.items():
        if not 0 <= p < cfg.n:
            err("byzantine", f"process {p} out of range")
        if script.name not in SCRIPT_NAMES:
            err("byzantine", f"unknown adversary script {script.name!r}")

    for idx, req in enumerate(cfg.workload):
        where = f"workload[{idx}]"
        if req.time < 0:
            err(where, "negative send time")
        if not 0 <= req.sender < cfg.n:
            err(where, f"sender {req.sender} out of range")
        dests = req.dests
        if not dests:
            err(where, "empty destination group")
        for d in dests:
            if not 0 <= d < cfg.n:
                err(where, f"destination {d} out of range")
        if req.sender in dests:
            err(where, "self-sends are not allowed")
        if isinstance(req.dest, frozenset) and not cfg.multicast:
            err(where, "group destination requires multicast mode")

    if cfg.workload and cfg.horizon <= cfg.workload_end + 4 * cfg.delta:
        err("horizon", f"horizon {cfg.horizon} must exceed last send "
                       f"{cfg.workload_end} + 4*delta ({4 * cfg.delta})")
    if cfg.horizon < 0:
        err("horizon", "horizon must be >= 0")
    return out


def config_errors(cfg: ScenarioConfig) -> list[Violation]:
    return [v for v in validate_config(cfg) if v.level == "error"]


_REQUIRED = ("n", "delta")


def config_from_mapping(raw: Mapping[str, Any]) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from parsed key/value data."""
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required field(s): {', '.join(missing)}")
    known = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")

    kw = {k: v for k, v in raw.items() if k not in ("workload", "byzantine", "schedule")}
    workload = []
    for item in raw.get("workload", []):
        dest = item["dest"]
        dest = frozenset(int(d) for d in dest) if isinstance(dest, (list, tuple)) else int(dest)
        workload.append(SendRequest(int(item["time"]), int(item["sender"]), dest, item.get("payload")))
    byzantine = {}
    for pid, entry in raw.get("byzantine", {}).items():
        byzantine[int(pid)] = AdversaryScript(entry["script"], dict(entry.get("params", {})))
    schedule = {}
    for key, d in raw.get("schedule", {}).items():
        i, j = (int(x) for x in str(key).split("->"))
        schedule[(i, j)] = int(d)
    try:
        return ScenarioConfig(workload=workload, byzantine=byzantine, schedule=schedule, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Load a scenario from a TOML file (field names as in ScenarioConfig)."""
    try:
        raw = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_mapping(raw)
