import copy

import pytest

from lightiot import audit
from lightiot.sim import run_scenario


@pytest.fixture(scope="module")
def suite():
    return audit.run_suite(3, trace_sessions=10)


def test_clean_run_has_no_violations():
    assert audit.untraceability_violations(run_scenario(seed=4, n_sessions=5)) == []


def test_detects_identity_on_the_wire():
    run = run_scenario(seed=4)
    c = run.clients["c0"]
    ev = run.events[2]
    raw = bytearray.fromhex(ev["raw_hex"])
    raw[5:21] = c.id_c  # unaligned on purpose
    ev["raw_hex"] = raw.hex()
    problems = audit.untraceability_violations(run)
    assert problems and "c0.id" in problems[0] and "byte 5" in problems[0]


def test_detects_secret_on_the_wire():
    run = run_scenario(seed=4)
    ev = run.events[0]
    ev["raw_hex"] = run.gateways["g0"].lambda_gw.hex() + ev["raw_hex"][32:]
    assert any("g0.secret" in p for p in audit.untraceability_violations(run))


def test_detects_pseudonym_reuse():
    run = run_scenario(seed=4, n_sessions=3)
    auth = run.sessions_of("authentication")
    auth[2].p_id_c = auth[0].p_id_c
    assert any("c0 reused" in p for p in audit.untraceability_violations(run))


def test_injected_frames_are_not_blamed_on_senders():
    run = run_scenario(seed=4)
    ev = dict(run.events[0], injected=True, sender_emitted=False,
              raw_hex=run.clients["c0"].id_c.hex() * 4 + "00" * 4)
    run.events.append(ev)
    assert audit.untraceability_violations(run) == []


def test_suite_passes(suite):
    assert suite["passed"]
    assert suite["honest"]["verdict"] == "ok"
    assert all(r["stale_rejected"] for r in suite["replay"].values())
    assert sum(t["trials"] for t in suite["tamper"].values()) == 3424
    assert suite["known_exposures"]


@pytest.mark.parametrize("path,value", [
    (("honest", "verdict"), "partial"),
    (("replay", "M4", "stale_rejected"), False),
    (("tamper", "M6", "completed_handshakes"), 1),
    (("block", "M5", "recovered"), False),
    (("trace", "violations"), ["x"]),
    (("trace", "completed"), 9),
])
def test_suite_verdict_reacts_to_each_failure(suite, path, value):
    broken = copy.deepcopy(suite)
    node = broken
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    assert not audit.suite_passed(broken)


def test_dumps_is_sorted_and_newline_terminated(suite):
    text = audit.dumps(suite)
    assert text.endswith("\n")
    assert text.index('"block"') < text.index('"honest"') < text.index('"tamper"')
