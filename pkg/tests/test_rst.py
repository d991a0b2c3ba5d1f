import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bftcausal.core import Envelope, Kind, SendRequest
from bftcausal.oracle import build_hb, check_liveness, check_safety
from bftcausal.rst import MatrixClock, RstState, rst_deliver, rst_deliverable, rst_send
from bftcausal.scenarios import random_rst, simulate


def test_first_send_piggybacks_zeros():
    st0 = RstState(0, 3)
    body, st0 = rst_send(st0, 1)
    assert body.clock == MatrixClock.zeros(3)
    assert st0.clock[0, 1] == 1


def test_second_send_piggybacks_pre_increment_clock():
    st0 = RstState(0, 3)
    rst_send(st0, 1)
    body, _ = rst_send(st0, 1)
    assert body.clock[0, 1] == 1 and st0.clock[0, 1] == 2


def test_piggyback_is_a_copy():
    st0 = RstState(0, 3)
    body, _ = rst_send(st0, 1)
    rst_send(st0, 2)
    assert body.clock[0, 2] == 0


def test_self_send_rejected():
    with pytest.raises(ValueError):
        rst_send(RstState(0, 3), 0)


def _env(origin, dest, clock, id=1):
    body, _ = rst_send(RstState(origin, clock.n, clock=clock.copy()), dest)
    body.clock = clock
    return Envelope(id, origin, dest, Kind.APP, body, 0, 1)


def test_merge_then_send_carries_learned_entry():
    st0 = RstState(0, 3)
    incoming = MatrixClock.zeros(3)
    incoming[2, 1] = 4
    rst_deliver(st0, _env(2, 0, incoming))
    body, _ = rst_send(st0, 1)
    assert body.clock[2, 1] == 4


def test_delivery_condition():
    st1 = RstState(1, 3)
    assert rst_deliverable(st1, MatrixClock.zeros(3))
    m = MatrixClock.zeros(3)
    m[0, 1] = 1
    assert not rst_deliverable(st1, m)


def test_boosted_entry_never_deliverable():
    st1 = RstState(1, 3)
    st1.delivered[:] = [3, 0, 3]
    m = MatrixClock.zeros(3)
    m[2, 1] = 3 + 1
    assert not rst_deliverable(st1, m)


def test_merge_is_max_and_idempotent():
    a = MatrixClock.zeros(3)
    b = MatrixClock.of([[0, 0, 0], [0, 0, 0], [0, 3, 0]])
    a.merge(b)
    assert a[2, 1] == 3
    a.merge(b)
    assert a == b


def test_delivery_precondition_enforced():
    m = MatrixClock.zeros(2)
    m[0, 1] = 1
    with pytest.raises(AssertionError):
        rst_deliver(RstState(1, 2), _env(0, 1, m))


def test_pending_cascade():
    # m1 and m2 from p0 to p1; m2 arrives first and waits for m1
    st1 = RstState(1, 2)
    first, second = MatrixClock.zeros(2), MatrixClock.zeros(2)
    second[0, 1] = 1
    m1, m2 = _env(0, 1, first, 1), _env(0, 1, second, 2)
    st1.pending.append(m2)
    assert st1.drain() == []
    st1.pending.append(m1)
    assert st1.drain() == [m1, m2]
    assert st1.delivered.tolist() == [2, 0]


def test_saturating_entries():
    m = MatrixClock.zeros(2)
    m[0, 1] = np.iinfo(np.int64).max
    m[0, 1] = m[0, 1] + 5
    assert m[0, 1] == np.iinfo(np.int64).max


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_failure_free_random_workloads(seed):
    cfg = random_rst(seed)
    trace = simulate(cfg)
    rel = build_hb(trace)
    assert not check_safety(trace, rel, cfg.correct).safety_violations
    assert not check_liveness(trace, cfg).liveness_violations


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_clocks_monotone_at_correct_processes(seed):
    from bftcausal.scenarios import build_processes
    from bftcausal.simnet import Engine

    cfg = random_rst(seed)
    procs = build_processes(cfg)
    engine = Engine(cfg, procs)
    snapshots = {p: procs[p].state.clock.copy() for p in procs}
    original = engine._dispatch

    def watch(kind, payload):
        original(kind, payload)
        for p, proc in procs.items():
            assert snapshots[p] <= proc.state.clock
            snapshots[p] = proc.state.clock.copy()

    engine._dispatch = watch
    engine.run()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_pairseq_gapless_per_pair(seed):
    trace = simulate(random_rst(seed))
    seen = {}
    for ev in trace:
        if ev.kind == "send" and ev.envelope.kind == "app":
            s = ev.envelope.seq
            key = (s.sender, s.receiver)
            assert s.k == seen.get(key, 0) + 1
            seen[key] = s.k
