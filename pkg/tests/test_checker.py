import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from verisol.abstraction import KState, Kripke
from verisol.checker import Labeler, check, check_deadlock, oracle_check, verify
from verisol.fixtures import NAMES
from verisol.properties import (
    AF, AG, BT, UT, And, Atom, Const, Implies, Not, Or, depth, parse_ctl, parse_template, to_ctl,
)

from conftest import fixture, views

ATOMS = ("a", "b", "c")


def make_kripke(n, edges, labels, initial=(0,)):
    succ = [[] for _ in range(n)]
    for i, j in edges:
        if (str(j), j) not in succ[i]:
            succ[i].append((str(j), j))
    states = [KState(f"s{i}", (), (), 0, None) for i in range(n)]
    atoms = [frozenset(labels[i]) for i in range(n)]
    return Kripke(states, succ, list(initial), atoms, {i for i in range(n) if not succ[i]}, kind="test")


@st.composite
def kripkes(draw):
    n = draw(st.integers(1, 10))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    labels = draw(st.lists(st.sets(st.sampled_from(ATOMS)), min_size=n, max_size=n))
    init = draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=2))
    return make_kripke(n, edges, labels, sorted(init))


def ctl_formulas(max_depth=4):
    leaf = st.one_of(st.sampled_from(ATOMS).map(Atom), st.sampled_from([Const(True), Const(False)]))

    def grow(sub):
        return st.one_of(
            sub.map(Not),
            st.builds(And, sub, sub),
            st.builds(Or, sub, sub),
            st.builds(Implies, sub, sub),
            st.builds(UT, st.sampled_from(["EX", "AX", "EF", "AF", "EG", "AG"]), sub),
            st.builds(BT, st.sampled_from(["EU", "AU", "EW", "AW"]), sub, sub),
        )
    return st.recursive(leaf, grow, max_leaves=6).filter(lambda f: depth(f) <= max_depth)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(kripkes(), ctl_formulas())
def test_checker_matches_oracle(ks, f):
    assert check(ks, f).holds == oracle_check(ks, f)


def _valid_path(ks, trace):
    lab = Labeler(ks)
    return all(b in lab.succ[a] for a, b in zip(trace, trace[1:]))


@settings(max_examples=200, deadline=None)
@given(kripkes(), st.sampled_from(ATOMS))
def test_ag_counterexample_reaches_bad_state(ks, a):
    v = check(ks, AG(Atom(a)))
    if v.holds:
        return
    assert v.trace[0] in ks.initial
    assert _valid_path(ks, v.trace)
    assert a not in ks.atoms[v.trace[-1]]


@settings(max_examples=200, deadline=None)
@given(kripkes(), st.sampled_from(ATOMS))
def test_af_counterexample_is_closed_lasso(ks, a):
    v = check(ks, AF(Atom(a)))
    if v.holds:
        return
    assert v.trace[0] in ks.initial and v.loop is not None
    assert _valid_path(ks, v.trace)
    assert all(a not in ks.atoms[s] for s in v.trace)
    lab = Labeler(ks)
    assert v.trace[v.loop] in lab.succ[v.trace[-1]]


def test_deadlock_states_stutter():
    ks = make_kripke(2, [(0, 1)], [{"a"}, set()])
    assert check(ks, parse_ctl("AF !a")).holds
    assert check(ks, parse_ctl("EG true")).holds
    assert ks.deadlocks == {1}


def test_check_deadlock_on_hand_built():
    ks = make_kripke(2, [(0, 1)], [set(), {"deadlock"}])
    v = check_deadlock(ks)
    assert not v.holds and v.trace == [0, 1] and v.labels == ["1"]


def test_oracle_refuses_large_structures():
    n = 2001
    ks = make_kripke(n, [], [set()] * n)
    with pytest.raises(ValueError):
        oracle_check(ks, Atom("a"))


# ------------------------------------------------------------- fixtures

@pytest.mark.parametrize("name", NAMES)
def test_fixture_verdicts(name):
    fx = fixture(name)
    _, verdicts = verify(fx.model, views=views(name))
    got = ["Verified" if v.holds else "Violated" for v in verdicts]
    assert got == fx.expected


@pytest.mark.parametrize("name", NAMES)
def test_fixture_deadlock(name):
    fx, v = fixture(name), views(name)
    for ks in (v.initial, v.augmented):
        assert check_deadlock(ks).holds == fx.deadlock_free


def test_simple_deadlock_witness_reaches_stuck_state():
    v = views("simple_deadlock")
    d = check_deadlock(v.initial)
    assert not d.holds
    assert d.trace[-1] in v.initial.deadlocks


def test_blind_auction_row_vi_on_augmented():
    s = parse_template("if 21 happens, 21 can happen only after 24")
    _, [v] = verify(fixture("blind_auction").model, [s], views=views("blind_auction"))
    assert v.holds and v.model == "augmented"


def test_king_counterexamples():
    _, [k1] = verify(fixture("king_of_ether_1").model, views=views("king_of_ether_1"))
    _, [k2] = verify(fixture("king_of_ether_2").model, views=views("king_of_ether_2"))
    for v in (k1, k2):
        assert not v.holds and v.loop is not None
        i = v.translated.index("fallback")
        assert "4" in v.translated[i:]
    # King 2 loops on a fallback whose compensation transfer keeps reverting
    assert k2.translated[-2:] == ["fallback", "4"]


@pytest.mark.parametrize("name", NAMES)
def test_forced_augmented_agrees_with_initial(name):
    fx = fixture(name)
    specs = list(fx.specs)
    _, a = verify(fx.model, specs, views=views(name))
    _, b = verify(fx.model, specs, force_augmented=True, views=views(name))
    assert [v.holds for v in a] == [v.holds for v in b]
    assert {v.model for v in b} <= {"augmented"}


def test_property_formula_is_unresolved_template():
    _, [v] = verify(fixture("dao").model, views=views("dao"))
    assert v.formula == to_ctl(parse_template("if call happens, call can happen only after subtract"))
