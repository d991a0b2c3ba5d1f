import pytest

from bftcausal.adversary import (
    PHANTOM_BASE,
    ByzantineProcess,
    boost_attack,
    shrink_attack,
)
from bftcausal.core import AdversaryScript, ScenarioConfig, SendRequest
from bftcausal.oracle import check_liveness, evaluate
from bftcausal.rst import MatrixClock
from bftcausal.scenarios import PRESETS, run_scenario, simulate
from bftcausal.sender_inhibition import SiProcess
from bftcausal.simnet import Engine


def test_boost_minimal():
    forged = boost_attack(MatrixClock.zeros(3), (2, 1), 1)
    assert forged[2, 1] == 1
    assert forged.m.sum() == 1


def test_boost_requires_positive_amount():
    with pytest.raises(ValueError):
        boost_attack(MatrixClock.zeros(3), (2, 1), 0)


def test_shrink_hides_one():
    true = MatrixClock.zeros(3)
    true[0, 1] = 1
    assert shrink_attack(true, (0, 1))[0, 1] == 0
    assert true[0, 1] == 1


def test_shrink_refuses_at_zero():
    with pytest.raises(ValueError, match="nothing to hide"):
        shrink_attack(MatrixClock.zeros(3), (0, 1))


def test_boost_blocks_a_correct_pair():
    cfg = PRESETS["boost-attack-rst"].config(1)
    trace, verdict = run_scenario(cfg)
    stuck = {(v.sender, v.dest) for v in verdict.liveness_violations}
    assert (0, 1) in stuck


def test_boost_on_all_pairs_stalls_every_correct_pair():
    delta = 4
    workload = [SendRequest(0, 3, d) for d in (0, 1, 2)]
    workload += [SendRequest(delta + 1, s, d) for s in range(3) for d in range(3) if s != d]
    cfg = ScenarioConfig(n=4, protocol="rst", delta=delta, horizon=delta + 1 + 10 * delta,
                         workload=workload, byzantine={3: AdversaryScript("boost", {"d": 1})})
    trace = simulate(cfg)
    delivered = [ev for ev in trace.by_kind("deliver") if ev.envelope.origin != 3]
    assert delivered == []
    assert len(check_liveness(trace, cfg).liveness_violations) == 6


def test_shrink_direct_and_two_hop_violations():
    trace, verdict = run_scenario(PRESETS["shrink-attack-rst"].config())
    found = {(v.dest, v.earlier, v.later) for v in verdict.safety_violations}
    assert (1, "m0.1", "m3.1") in found   # p3's message overtakes p0's at p1
    assert (2, "m0.2", "m1.1") in found   # p1's relay overtakes p0's at p2


def _drive(script, protocol="channel_sync", n=3, workload=(), **kw):
    cfg = ScenarioConfig(n=n, protocol=protocol, horizon=60, delay_model="fixed", fixed_delay=1,
                         workload=list(workload), byzantine={n - 1: script}, **kw)
    return cfg, simulate(cfg)


def test_silent_ack_never_acks():
    cfg, trace = _drive(AdversaryScript("silent_ack"), "sender_inhibition",
                        workload=[SendRequest(0, 0, 2)])
    assert [ev for ev in trace.by_kind("ack_sent") if ev.process == 2] == []


def test_silent_ack_releases_sender_at_exactly_two_delta():
    cfg, trace = _drive(AdversaryScript("silent_ack"), "sender_inhibition",
                        workload=[SendRequest(0, 0, 2), SendRequest(0, 0, 1)])
    sends = [ev.time for ev in trace.by_kind("send") if ev.process == 0]
    assert sends == [0, 2 * cfg.delta]


def test_phantom_sent_control_times_out_after_delta_s():
    cfg, trace = _drive(AdversaryScript("phantom_sent", {"times": [0]}), delta_s=3)
    phantoms = [ev for ev in trace.by_kind("send") if ev.envelope.kind == "control"]
    assert phantoms and all(ev.envelope.seq.k >= PHANTOM_BASE for ev in phantoms)
    assert not any(ev.kind == "send" and ev.envelope.kind == "app" for ev in trace)
    for ev in trace.by_kind("delete"):
        push = next(p for p in trace.by_kind("push") if p.envelope.id == ev.envelope.id)
        assert ev.time == push.time + 3


def test_withhold_delivered_suppresses_fan_out():
    cfg, trace = _drive(AdversaryScript("withhold_delivered"), workload=[SendRequest(0, 0, 2)])
    assert any(ev.process == 2 for ev in trace.by_kind("deliver"))
    assert not [ev for ev in trace.by_kind("send") if ev.process == 2]
    assert evaluate(trace, cfg).clean


def test_crash_stops_all_emission():
    cfg, trace = _drive(AdversaryScript("crash_at", {"time": 5}),
                        workload=[SendRequest(0, 2, 0), SendRequest(6, 2, 1), SendRequest(2, 0, 2)])
    assert all(ev.time < 5 for ev in trace if ev.process == 2 and ev.kind in ("send", "deliver"))
    assert [ev.time for ev in trace.by_kind("send") if ev.process == 2 and ev.envelope.kind == "app"] == [0]


def test_forged_origin_is_dropped():
    script = AdversaryScript("custom_schedule", {"emissions": [
        {"time": 1, "dest": 1, "kind": "control", "tag": "sent", "actor": 0, "subject": 1,
         "seq": [0, 1, 1], "origin": 0}]})
    cfg, trace = _drive(script)
    (drop,) = trace.by_kind("drop")
    assert drop.process == 2 and drop.envelope.origin == 2
    assert not trace.by_kind("arrive")


def test_control_with_foreign_actor_dropped_by_receiver():
    script = AdversaryScript("custom_schedule", {"emissions": [
        {"time": 1, "dest": 1, "kind": "control", "tag": "sent", "actor": 0, "subject": 1,
         "seq": [0, 1, 1]}]})
    cfg, trace = _drive(script)
    drops = trace.by_kind("drop")
    assert [d.process for d in drops] == [1]
    assert "actor differs" in drops[0].detail


def test_drive_returns_what_was_emitted():
    cfg = ScenarioConfig(n=3, protocol="sender_inhibition", horizon=60)
    proc = ByzantineProcess(SiProcess(2, 3), AdversaryScript("silent_ack"))
    engine = Engine(cfg, {2: proc})
    out = proc.drive(engine.context(2), ("request", SendRequest(0, 2, 0)))
    assert [e.kind.value for e in out] == ["app"]


def test_unknown_script_rejected():
    with pytest.raises(ValueError):
        ByzantineProcess(SiProcess(0, 2), AdversaryScript("teleport"))
