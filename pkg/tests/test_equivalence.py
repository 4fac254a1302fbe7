import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from verisol.equivalence import (
    TAU, Domain, StateCapExceeded, build_lts_augmented, build_lts_initial, call_alphabet,
    calls_from_json, check_model, check_weak_bisim, compare_traces, delete_edge, random_calls,
)
from verisol.fixtures import NAMES, fixture_path, load_domain
from verisol.parser import parse_contract
from verisol.semantics import ExternalEnvironment

from conftest import aug, fixture


def _domain(name):
    return load_domain(name, "bisim") if name == "blind_auction" else load_domain(name)


@pytest.mark.parametrize("name", NAMES)
def test_fixture_bisimilar(name):
    r = check_model(fixture(name).model, _domain(name), aug(name))
    assert r.related, r.reason


def test_blind_auction_reset_mutant_not_bisimilar():
    a = aug("blind_auction")
    dom = _domain("blind_auction")
    mutant = delete_edge(a, 37)
    assert len(mutant.transitions) == len(a.transitions) - 1
    r = check_weak_bisim(build_lts_initial(a.original, dom), build_lts_augmented(mutant, dom))
    assert not r.related
    assert r.witness and r.reason


def test_scripted_call_failure_is_seen_by_both_models():
    # a revert trial must not consume the call result the real run sees
    name = "king_of_ether_1"
    dom = Domain(senders=(1,), values=(1,), call_results=((False,),), max_calls=1)
    r = check_model(fixture(name).model, dom, aug(name))
    assert r.related, r.reason


@pytest.mark.parametrize("name", NAMES)
def test_random_traces_agree(name):
    fx, a, dom = fixture(name), aug(name), load_domain(name)
    rng = random.Random(7)
    for _ in range(60):
        calls = random_calls(fx.model, dom, rng, rng.randint(0, 8))
        assert compare_traces(fx.model, a, calls, dom.ctor_env) is None


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 2**32), st.integers(0, 10))
def test_trace_agreement_property(name, seed, n):
    fx = fixture(name)
    dom = load_domain(name)
    calls = random_calls(fx.model, dom, random.Random(seed), n)
    assert compare_traces(fx.model, aug(name), calls, dom.ctor_env) is None


def test_random_calls_time_is_monotone():
    dom = load_domain("blind_auction")
    calls = random_calls(fixture("blind_auction").model, dom, random.Random(1), 40)
    times = [c.env.now for c in calls]
    assert times == sorted(times)
    assert set(times) <= set(dom.times)


def test_alphabet_respects_payable_and_functions():
    m = fixture("blind_auction").model
    dom = Domain(senders=(1,), values=(0, 5), functions=("close",))
    al = call_alphabet(m, dom)
    assert {c.name for c in al} == {"close"}
    assert {c.env.value for c in al} == {0}


def test_observable_labels():
    m = parse_contract("""contract C { states A; initial A; vars { uint x; }
        transition t(uint v) from A to A { if (v > 0) { x = v; } } }""")
    dom = Domain(senders=(1,), max_calls=1)
    la, lb = build_lts_initial(m, dom), build_lts_augmented(aug_of(m), dom)
    obs = lambda l: {x for x in l.labels() if x != TAU and x[0] != "call"}
    assert obs(la) == obs(lb)
    assert TAU in lb.labels() and TAU not in la.labels()


def aug_of(m):
    from verisol.transform import augment_model
    return augment_model(m)


def test_lts_state_cap():
    with pytest.raises(StateCapExceeded):
        build_lts_initial(fixture("blind_auction").model, load_domain("blind_auction"), cap=10)


def test_calls_from_json_materializes_types():
    m = fixture("blind_auction").model
    calls = calls_from_json(m, [{"name": "bid", "args": ["0x01"], "env": {"sender": "0x2", "value": 3}}])
    c = calls[0]
    assert c.args[0] == b"\0" * 31 + b"\x01"
    assert c.env.sender == 2 and c.env.value == 3


def test_domain_json_files_round_trip():
    for kind in ("domain", "bisim"):
        d = json.loads(fixture_path("blind_auction", f".{kind}.json").read_text())
        dom = Domain.from_json(d)
        assert dom.max_calls == d["max_calls"]
        assert isinstance(dom.ctor_env, ExternalEnvironment)
