import json

import pytest

from verisol.equivalence import Domain
from verisol.fixtures import FIXTURE_DIR, NAMES, UnknownFixture, fixture_path, load_domain, load_fixture

from make_goldens import verdict_record


def test_catalogue():
    assert len(NAMES) == 8
    expected = json.loads((FIXTURE_DIR / "expected.json").read_text())
    assert set(expected) == set(NAMES)


@pytest.mark.parametrize("name", NAMES)
def test_load_fixture(name):
    fx = load_fixture(name)
    model, specs, expected = fx
    assert len(specs) == len(expected)
    assert fx.path == fixture_path(name)
    assert isinstance(fx.deadlock_free, bool)


def test_unknown_fixture():
    with pytest.raises(UnknownFixture):
        load_fixture("nope")
    with pytest.raises(KeyError):
        fixture_path("nope")


@pytest.mark.parametrize("name", NAMES)
def test_verdict_goldens(name):
    want = json.loads((FIXTURE_DIR / "golden" / f"{name}.verdicts.json").read_text())
    assert verdict_record(name) == want


def test_domains():
    assert isinstance(load_domain("dao"), Domain)
    assert load_domain("blind_auction").max_calls == 3
    assert load_domain("blind_auction", "bisim").max_calls == 4


def test_resource_allocation_pair_differs_only_in_reset():
    def code(name):
        return [l for l in fixture_path(name).read_text().splitlines() if not l.lstrip().startswith("//")]
    a, b = code("resource_allocation"), code("resource_allocation_fixed")
    reset = "offers.length = 0;"
    assert [l.strip() for l in a].count(reset) == [l.strip() for l in b].count(reset) == 1
    assert [l for l in a if reset not in l] == [l for l in b if reset not in l]
    assert a != b
