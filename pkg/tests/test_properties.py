import pytest
from hypothesis import given, strategies as st

from verisol.checker import plan_property
from verisol.lexer import ParseError
from verisol.parser import parse_contract
from verisol.properties import (
    AG, AF, AW, BT, DEADLOCK_FREE, UT, And, Atom, Implies, Not, Or, PropertySpec,
    atoms_of, load_props, parse_ctl, parse_property, parse_template, render, resolve_formula,
    split_names, to_ctl,
)
from verisol.transform import augment_model, resolve_atom

from conftest import aug, views

# every template in "table" rendering, symbol for symbol
TABLE_ROWS = [
    ("p cannot happen after q", "AG(q → AG(¬p))"),
    ("p can happen only after q", "A[¬p W q]"),
    ("if p happens, q can happen only after r", "AG(p → AX A[¬q W r])"),
    ("p can never happen", "AG(¬p)"),
    ("p cannot happen before q", "A[¬p | AG(¬q) W q]"),
    ("p will eventually happen after q", "AG(q → AF(p))"),
    ("p will eventually happen", "AF(p)"),
]


@pytest.mark.parametrize("text,expected", TABLE_ROWS)
def test_template_table_golden(text, expected):
    assert render(to_ctl(parse_template(text)), "table") == expected


def test_template_kinds():
    kinds = [parse_template(t).kind for t, _ in TABLE_ROWS]
    assert kinds == ["Safety"] * 5 + ["Liveness"] * 2


def test_never_before_reading():
    f = to_ctl(parse_template("p cannot happen before q"))
    assert f == AW(Or(Not(Atom("p")), AG(Not(Atom("q")))), Atom("q"))


CASE_STUDY = [
    ("bid cannot happen after close", "AG(close → AG ¬bid)"),
    ("withdraw can happen only after finish", "A[¬withdraw W finish]"),
    ("finish can happen only after close", "A[¬finish W close]"),
    ("23 cannot happen after 18", "AG(18 → AG ¬23)"),
    ("if 21 happens, 21 can happen only after 24", "AG(21 → AX A[¬21 W 24])"),
    ("if call happens, call can happen only after subtract", "AG(call → AX A[¬call W subtract])"),
    ("7 will eventually happen after 4", "AG(4 → AF 7)"),
    ("8 will eventually happen after fallback", "AG(fallback → AF 8)"),
]


@pytest.mark.parametrize("text,expected", CASE_STUDY)
def test_case_study_formulas(text, expected):
    assert render(to_ctl(parse_template(text))) == expected


def _flatten_or(f):
    if isinstance(f, Or):
        return _flatten_or(f.lhs) | _flatten_or(f.rhs)
    return {f}


def test_cancel_property_modulo_commutativity():
    got = to_ctl(parse_template("cancelABB; cancelRB cannot happen after finish"))
    want = parse_ctl("AG(finish → AG ¬(cancelRB ∨ cancelABB))")
    assert got.op == want.op == "AG"
    g, w = got.arg, want.arg
    assert g.lhs == w.lhs
    assert _flatten_or(g.rhs.arg.arg) == _flatten_or(w.rhs.arg.arg)


def test_templates_accept_wording_variants():
    assert parse_template("bid can not happen after close.").template == "CannotAfter"
    assert parse_template("x  can never   happen").template == "CanNever"
    assert parse_template("if a happens q can happen only after r happens").r == ("r",)


@pytest.mark.parametrize("text", ["", "bid happens sometimes", "cannot happen after close", "x can happen"])
def test_unmatched_template_is_rejected(text):
    with pytest.raises(ParseError) as e:
        parse_template(text)
    assert e.value.diagnostics[0].code == "unknown-template"


@pytest.mark.parametrize("text,names", [
    ("cancelABB; cancelRB", ("cancelABB", "cancelRB")),
    ("{a, b}", ("a, b",)),
    ("a or b | c ∪ d", ("a", "b", "c", "d")),
    ("withdraw.pendingReturns[msg.sender] = 0;", ("withdraw.pendingReturns[msg.sender] = 0;",)),
    ("f.x = a || b;", ("f.x = a || b;",)),
    ("t.<revert>", ("t.<revert>",)),
])
def test_split_names(text, names):
    assert split_names(text) == names


def test_load_props_sidecar(tmp_path):
    p = tmp_path / "x.props"
    p.write_text('# comment\n\n"bid cannot happen after close"\nctl AG(!deadlock)\n')
    specs = load_props(p)
    assert [s.template for s in specs] == ["CannotAfter", "Ctl"]
    assert to_ctl(specs[1]) == DEADLOCK_FREE


def test_direct_ctl_property():
    s = parse_property("A[!a U (b & c)] -> EF d", ctl=True)
    assert s.kind == "CTL"
    assert s.names() == ("a", "b", "c", "d")


def test_parse_ctl_accepts_quoted_statement_atoms():
    f = parse_ctl('AG("withdraw.pendingReturns[msg.sender] = 0;" -> AF done)')
    assert atoms_of(f) == {"withdraw.pendingReturns[msg.sender] = 0;", "done"}
    assert parse_ctl(render(f)) == f


def test_deadlock_formula():
    assert render(DEADLOCK_FREE) == "AG ¬deadlock"


# ------------------------------------------------------------- resolution

def test_union_resolution_on_blind_auction():
    a = aug("blind_auction")
    both = resolve_atom(a, "cancelABB") | resolve_atom(a, "cancelRB")
    spec = parse_template("cancelABB; cancelRB cannot happen after finish")
    ks, f, which = plan_property(views("blind_auction"), to_ctl(spec), force_augmented=True)
    assert which == "augmented"
    assert atoms_of(f) >= both
    assert not atoms_of(f) & {"cancelABB", "cancelRB"}


def test_reset_statement_resolves_to_single_label():
    a = aug("blind_auction")
    assert len(resolve_atom(a, "withdraw.pendingReturns[msg.sender] = 0;")) == 1
    assert resolve_atom(a, "24") == resolve_atom(a, "withdraw.pendingReturns[msg.sender] = 0;")


def test_duplicated_statement_resolves_to_every_copy():
    m = parse_contract("""
    contract D {
        states A; initial A;
        vars { uint x; }
        transition t(bool b) from A to A {
            if (b) { x = 1; } else { x = 1; }
        }
    }""")
    assert len(resolve_atom(augment_model(m), "t.x = 1;")) == 2


def test_transition_names_use_initial_view():
    _, f, which = plan_property(views("blind_auction"), to_ctl(parse_template("bid cannot happen after close")))
    assert which == "initial"
    assert atoms_of(f) == {"bid", "close"}


def test_resolve_formula_missing_name():
    with pytest.raises(KeyError):
        resolve_formula(Atom("nope"), {})


# ------------------------------------------------------------- round trip

NAMES_ST = st.sampled_from(["a", "b", "c", "17", "x.y"])


def formulas():
    leaf = NAMES_ST.map(Atom)

    def grow(sub):
        return st.one_of(
            sub.map(Not),
            st.builds(And, sub, sub),
            st.builds(Or, sub, sub),
            st.builds(Implies, sub, sub),
            st.builds(UT, st.sampled_from(["EX", "AX", "EF", "AF", "EG", "AG"]), sub),
            st.builds(BT, st.sampled_from(["EU", "AU", "EW", "AW"]), sub, sub),
        )
    return st.recursive(leaf, grow, max_leaves=8)


@given(formulas())
def test_render_parse_round_trip(f):
    assert parse_ctl(render(f)) == f
    assert parse_ctl(render(f, "ascii")) == f


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=3, unique=True))
def test_union_atoms_become_disjunction(names):
    spec = PropertySpec("Eventually", p=tuple(names))
    assert atoms_of(to_ctl(spec)) == set(names)
    assert to_ctl(spec) == AF(_or_chain(names))


def _or_chain(names):
    f = Atom(names[0])
    for n in names[1:]:
        f = Or(f, Atom(n))
    return f
