import pytest

from sessionkit.errors import BoundExceeded
from sessionkit.modelcheck import (
    ORIGINAL,
    PROPERTIES,
    SECURE,
    all_maximal_traces,
    build_model,
    check,
    check_all,
    classify,
    explore,
)
from sessionkit.attacks import INFILTRATED

from conformance import model_trace_conforms, model_traces_conform
from scenarios import run_scenario


def verdict_map(mode, attacker, k=1):
    m = build_model(mode, attacker, k)
    return {v.property: v for v in check_all(m)}


# -- model construction ---------------------------------------------------------

def test_build_model_validates_k():
    build_model(SECURE, False, 2)
    with pytest.raises(ValueError):
        build_model(SECURE, False, 3)
    with pytest.raises(ValueError):
        build_model("weird", False, 0)


def test_secure_no_attacker_unique_outcome():
    m = build_model(SECURE, False, 0)
    ex = explore(m)
    assert len(ex.terminals) == 1
    assert set(ex.terminals.values()) == {"all_completed"}


@pytest.mark.parametrize("k", [0, 1, 2])
def test_secure_traces_conform_to_credentialed_figure(k):
    m = build_model(SECURE, False, k)
    traces = all_maximal_traces(m)
    assert traces
    assert model_trace_conforms(traces[0], secure=True) == []
    assert model_traces_conform(traces, secure=True) == []


@pytest.mark.parametrize("k", [0, 1, 2])
def test_original_traces_conform_to_plain_figure(k):
    m = build_model(ORIGINAL, False, k)
    traces = all_maximal_traces(m)
    assert model_trace_conforms(traces[0], secure=False) == []
    assert model_traces_conform(traces, secure=False) == []


def test_original_k1_resends_one_frame():
    m = build_model(ORIGINAL, False, 1)
    for trace in all_maximal_traces(m):
        lm_steps = [l for l in trace if l[0] == "A" and "lm" in l[3]]
        assert lm_steps == [("A", "send", "A>C", "('lm', 1)")]


def test_attacker_model_contains_reconnection_moves():
    m = build_model(ORIGINAL, True, 0)
    ex = explore(m)
    connects = set()
    for state, (parent, label) in ex.parents.items():
        if label[0] == "E":
            connects.add(label[1])
    assert {"intercept", "copy", "send", "connect", "recv"} <= connects


# -- exploration ------------------------------------------------------------------

def test_exploration_is_deterministic():
    m = build_model(ORIGINAL, True, 2)
    ex1, ex2 = explore(m), explore(m)
    assert ex1.states == ex2.states
    assert ex1.terminals == ex2.terminals
    v1 = [(v.property, v.holds) for v in check_all(m)]
    v2 = [(v.property, v.holds) for v in check_all(m)]
    assert v1 == v2


def test_state_bound_is_distinguished_from_deadlock():
    with pytest.raises(BoundExceeded):
        explore(build_model(ORIGINAL, True, 2, bound=50))


def test_trace_bound():
    with pytest.raises(BoundExceeded):
        all_maximal_traces(build_model(SECURE, False, 2), limit=10)


def test_attacker_stuck_states_are_attributed():
    m = build_model(ORIGINAL, True, 1)
    ex = explore(m)
    assert ex.stuck_honest == []  # every stuck run involves an attacker action
    stuck = [s for s, cls in ex.terminals.items() if cls == "stuck"]
    assert all(s.attacker_acted for s in stuck)


# -- verdicts -----------------------------------------------------------------------

def test_original_with_attacker_fails_attacker_exclusion():
    v = verdict_map(ORIGINAL, True)["AttackerExclusion"]
    assert not v.holds
    assert v.witness, "failing verdict must carry a witness"
    assert any(step[0] == "E" and step[1] == "connect" for step in v.witness)
    assert any(step[0] == "E" and step[1] in ("intercept", "copy")
               for step in v.witness)


def test_secure_with_attacker_all_properties_hold():
    for k in (0, 1, 2):
        for v in check_all(build_model(SECURE, True, k)):
            assert v.holds, f"{v.property} failed at k={k}: {v.detail}"


@pytest.mark.parametrize("k", [0, 1, 2])
def test_secure_honest_liveness_linearity_consistency(k):
    vm = verdict_map(SECURE, False, k)
    for name in ("Liveness", "Linearity", "Consistency"):
        assert vm[name].holds


def test_original_honest_runs_complete():
    vm = verdict_map(ORIGINAL, False)
    assert vm["Liveness"].holds
    assert vm["Linearity"].holds
    assert vm["Consistency"].holds
    # no credentials exist at all in the original protocol
    assert not vm["TernaryAuth"].holds
    assert not vm["Freshness"].holds


def test_consistency_fails_under_attack_when_messages_fly():
    assert not verdict_map(ORIGINAL, True, 1)["Consistency"].holds
    assert not verdict_map(ORIGINAL, True, 2)["Consistency"].holds
    # with nothing in flight the forged resend is indistinguishable
    assert verdict_map(ORIGINAL, True, 0)["Consistency"].holds


def test_witnesses_are_shortest_first():
    m = build_model(ORIGINAL, True, 1)
    ex = explore(m)
    v = check(m, "AttackerExclusion", ex)
    infiltrated = [s for s, cls in ex.terminals.items() if cls == "infiltrated"]
    assert len(v.witness) == min(len(ex.witness_to(s)) for s in infiltrated)


# -- witness replay against the implementation ---------------------------------------

def model_class_of_witness(witness) -> str:
    return "infiltrated" if any(step[0] == "E" for step in witness) else \
        "all_completed"


def replay_witness_class(mode: str, k: int, witness) -> str:
    attacked = any(step[0] == "E" for step in witness)
    res = run_scenario(n=k, consumed=0, secure=(mode == SECURE), srp=False,
                       attack_mode="ds_theft" if attacked else None,
                       seed=k + 17)
    if attacked:
        assert res.attack is not None
        return "infiltrated" if res.attack.verdict == INFILTRATED else "blocked"
    honest = {r: o for r, o in res.outcomes.items() if r in "ABC"}
    return "all_completed" if all(o == "ok" for o in honest.values()) else "stuck"


def collect_witnesses():
    found = []
    for k in (0, 1, 2):
        m = build_model(ORIGINAL, True, k)
        ex = explore(m)
        for prop in PROPERTIES:
            v = check(m, prop, ex)
            if not v.holds:
                found.append((ORIGINAL, k, prop, tuple(v.witness)))
    return found


def test_witness_replay_matches_implementation_outcomes():
    witnesses = collect_witnesses()
    distinct = {w for _, _, _, w in witnesses}
    assert len(distinct) >= 5
    for mode, k, prop, witness in witnesses:
        expected = model_class_of_witness(witness)
        got = replay_witness_class(mode, k, witness)
        assert got == expected, f"{prop} k={k}: model={expected} impl={got}"
