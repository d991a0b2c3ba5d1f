import pytest

from bftcausal.core import ScenarioConfig, SendRequest


def scenario(n=3, workload=(), **kw) -> ScenarioConfig:
    """Small scenario with a horizon comfortably past the last send."""
    workload = [w if isinstance(w, SendRequest) else SendRequest(*w) for w in workload]
    delta = kw.get("delta", 5)
    kw.setdefault("horizon", max((w.time for w in workload), default=0) + 20 * delta)
    return ScenarioConfig(n=n, workload=workload, **kw)


@pytest.fixture
def make_scenario():
    return scenario


# criterion number -> (passed, detail), filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
ACCEPTANCE_NAMES = {
    1: "failure-free matrix clocks: safe, live, incremental == brute force",
    2: "boost attack stalls a correct->correct message",
    3: "shrink attack breaks causal order, directly and over two hops",
    4: "Sender-Inhibition: safe, live, locks <= 2*delta, exactly 2*delta when silent",
    5: "Channel Sync never deletes a delivered-control before its sent-control; tight at delta_r = delta-1",
    6: "Channel Sync: safe, live, queue delay within the bound",
    7: "two correct processes among three Byzantine still communicate",
    8: "presets are byte-for-byte deterministic",
    9: "planted delivery-order inversions are all flagged",
}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE[number] = (passed, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    ran = [i for i in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
           if "test_acceptance" in i.nodeid]
    if not ran and not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in ACCEPTANCE_NAMES.items():
        passed, detail = ACCEPTANCE.get(number, (False, "not run or errored"))
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}")
