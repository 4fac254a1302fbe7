"""Case-study contracts with their expected verdicts and exploration domains."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..model import ContractModel
from ..parser import load_contract
from ..properties import PropertySpec, load_props, parse_property

FIXTURE_DIR = Path(__file__).resolve().parent

NAMES = ("blind_auction", "dao", "king_of_ether_1", "king_of_ether_2", "simple_deadlock",
         "simple_contract", "resource_allocation", "resource_allocation_fixed")


class UnknownFixture(KeyError):
    pass


@dataclass
class Fixture:
    name: str
    model: ContractModel
    specs: list
    expected: list            # "Verified" / "Violated" per spec
    deadlock_free: bool
    path: Path

    def __iter__(self):
        # (model, specs, expected) unpacking
        return iter((self.model, self.specs, self.expected))


def fixture_path(name: str, suffix: str = ".vsc") -> Path:
    if name not in NAMES:
        raise UnknownFixture(f"unknown fixture {name!r}; known: {', '.join(NAMES)}")
    return FIXTURE_DIR / f"{name}{suffix}"


def specs_of(model: ContractModel, sidecar: Optional[Path] = None) -> list[PropertySpec]:
    specs = [parse_property(p.text, p.ctl) for p in model.properties]
    if sidecar is not None and sidecar.exists():
        specs += load_props(sidecar)
    return specs


def load_fixture(name: str) -> Fixture:
    path = fixture_path(name)
    model = load_contract(path)
    exp = json.loads((FIXTURE_DIR / "expected.json").read_text())[name]
    return Fixture(name, model, specs_of(model, path.with_suffix(".props")), list(exp["properties"]),
                   exp["deadlock_free"], path)


def load_domain(name: str, kind: str = "domain"):
    """Exploration domain stored next to the fixture, or the default one."""
    from ..equivalence import Domain
    p = fixture_path(name, f".{kind}.json")
    if p.exists():
        return Domain.from_json(json.loads(p.read_text()))
    return Domain(senders=(1, 2), values=(0, 1, 2), call_results=((), (False,)))
