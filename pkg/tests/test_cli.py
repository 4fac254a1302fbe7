import json
import subprocess
import sys

import jsonschema
import pytest

from verisol.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, main, run_verify
from verisol.fixtures import fixture_path

VERDICT = {"enum": ["Verified", "Violated"]}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["contract", "file", "properties", "deadlock", "states", "timings", "legend", "all_hold"],
    "properties": {
        "contract": {"type": "string"},
        "properties": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "property", "formula", "result", "kind", "model"],
                "properties": {
                    "index": {"type": "integer", "minimum": 1},
                    "result": VERDICT,
                    "kind": {"enum": ["Safety", "Liveness", "CTL"]},
                    "model": {"enum": ["initial", "augmented"]},
                    "trace": {"type": "array", "items": {"type": "string"}},
                    "loop": {"type": "integer"},
                },
            },
        },
        "deadlock": {
            "type": "object",
            "required": ["initial", "augmented"],
            "additionalProperties": {
                "type": "object",
                "required": ["result"],
                "properties": {"result": VERDICT, "witness": {"type": "array"}},
            },
        },
        "states": {
            "type": "object",
            "properties": {"initial": {"type": "integer"}, "augmented": {"type": "integer"}},
        },
        "all_hold": {"type": "boolean"},
    },
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["error", "message", "diagnostics"],
    "properties": {"error": {"type": "string"}, "diagnostics": {"type": "array"}},
}


def vsc(name):
    return str(fixture_path(name))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_blind_auction_all_verified(capsys):
    code, out, _ = run(capsys, "verify", vsc("blind_auction"))
    assert code == EXIT_OK
    assert out.count("Verified") == 8
    assert "Properties" in out and "Type" in out and "Result" in out


def test_verify_king_violated_prints_counterexample(capsys):
    code, out, _ = run(capsys, "verify", vsc("king_of_ether_1"))
    assert code == EXIT_FAIL
    assert "counterexample:" in out and "fallback" in out


@pytest.mark.parametrize("name", ["blind_auction", "king_of_ether_2", "simple_deadlock"])
def test_verify_json_schema(capsys, name):
    code, out, _ = run(capsys, "verify", vsc(name), "--json")
    rep = json.loads(out)
    jsonschema.validate(rep, REPORT_SCHEMA)
    assert (code == EXIT_OK) == rep["all_hold"]


def test_deadlock_witness_in_json(capsys):
    _, out, _ = run(capsys, "verify", vsc("simple_deadlock"), "--json")
    d = json.loads(out)["deadlock"]["initial"]
    assert d["result"] == "Violated" and d["witness"]


def test_extra_props_sidecar(capsys, tmp_path):
    p = tmp_path / "extra.props"
    p.write_text("ctl AG(bid -> EF close)\nreveal can happen only after close\n")
    code, out, _ = run(capsys, "verify", vsc("blind_auction"), "--props", str(p), "--json")
    props = json.loads(out)["properties"]
    assert len(props) == 8 and props[-1]["result"] == "Verified"
    assert props[-2]["kind"] == "CTL"


def test_augment_flag_uses_augmented_model(capsys):
    _, out, _ = run(capsys, "verify", vsc("dao"), "--augment", "--json")
    assert {p["model"] for p in json.loads(out)["properties"]} == {"augmented"}


def test_emit_kripke(capsys, tmp_path):
    f = tmp_path / "k.json"
    run(capsys, "verify", vsc("simple_contract"), "--emit-kripke", str(f))
    d = json.loads(f.read_text())
    assert set(d) == {"initial", "augmented"}
    assert d["initial"]["states"]


def test_parse_error_is_json_on_stderr(capsys, tmp_path):
    bad = tmp_path / "bad.vsc"
    bad.write_text("contract X { states A; initial B; }")
    code, out, err = run(capsys, "verify", str(bad))
    assert code == EXIT_ERROR and not out
    payload = json.loads(err)
    jsonschema.validate(payload, ERROR_SCHEMA)
    assert payload["diagnostics"]


def test_missing_file(capsys):
    code, _, err = run(capsys, "verify", "/nonexistent.vsc")
    assert code == EXIT_ERROR and json.loads(err)["error"] == "io-error"


def test_unknown_atom(capsys, tmp_path):
    p = tmp_path / "x.props"
    p.write_text("nosuch cannot happen after close\n")
    code, _, err = run(capsys, "verify", vsc("blind_auction"), "--props", str(p))
    assert code == EXIT_ERROR and json.loads(err)["error"] == "unknown-atom"


def test_usage_error(capsys):
    code, _, _ = run(capsys, "verify")
    assert code == EXIT_ERROR


def test_state_cap_flag(capsys):
    code, _, err = run(capsys, "verify", vsc("blind_auction"), "--state-cap", "5")
    assert code == EXIT_ERROR and json.loads(err)["error"] == "state-cap-exceeded"


@pytest.mark.parametrize("target,marker", [("solidity", "contract BlindAuction"), ("bip", "atom type"),
                                           ("nusmv", "MODULE main")])
def test_generate_targets(capsys, tmp_path, target, marker):
    out = tmp_path / "o.txt"
    code, _, _ = run(capsys, "generate", vsc("blind_auction"), "--target", target, "-o", str(out))
    assert code == EXIT_OK and marker in out.read_text()


def test_generate_nusmv_includes_deadlock_spec(capsys):
    _, out, _ = run(capsys, "generate", vsc("dao"), "--target", "nusmv")
    assert out.rstrip().endswith("CTLSPEC AG !(deadlock);")


def test_generate_require_verified_refuses(capsys):
    code, out, err = run(capsys, "generate", vsc("king_of_ether_1"), "--target", "solidity", "--require-verified")
    assert code != EXIT_OK and "contract" not in out
    assert err


def test_generate_require_verified_allows(capsys):
    code, out, _ = run(capsys, "generate", vsc("dao"), "--target", "solidity", "--require-verified")
    assert code == EXIT_OK and "contract DAO {" in out


def test_generate_bip_listing_style(capsys):
    _, out, _ = run(capsys, "generate", vsc("simple_contract"), "--target", "bip", "--bip-style", "listing")
    assert "package SimpleContract" in out


def test_simulate(capsys, tmp_path):
    t = tmp_path / "t.json"
    t.write_text(json.dumps({"constructor": {"sender": 1, "now": 0},
                             "calls": [{"name": "close", "env": {"now": 0}},
                                       {"name": "close", "env": {"now": 432000}},
                                       {"name": "nosuch"}]}))
    code, out, _ = run(capsys, "simulate", vsc("blind_auction"), str(t))
    assert code == EXIT_OK
    assert "TRANSITION-GRD" in out and "-> RB" in out and "TRANSITION-EXC3" in out


def test_simulate_augmented_json(capsys, tmp_path):
    t = tmp_path / "t.json"
    t.write_text(json.dumps({"calls": [{"name": "cancelABB"}]}))
    _, out, _ = run(capsys, "simulate", vsc("blind_auction"), str(t), "--augmented", "--json")
    assert json.loads(out)


def test_augment_and_atoms(capsys, tmp_path):
    f = tmp_path / "aug.vsc"
    code, out, _ = run(capsys, "augment", vsc("blind_auction"), "--emit-augmented", str(f))
    assert code == EXIT_OK and "withdraw" in f.read_text()
    code, out, _ = run(capsys, "atoms", vsc("blind_auction"))
    assert code == EXIT_OK and "24 = " in out


def test_equiv(capsys):
    dom = str(fixture_path("blind_auction", ".bisim.json"))
    code, out, _ = run(capsys, "equiv", vsc("blind_auction"), "--domain-file", dom, "--traces", "30")
    assert code == EXIT_OK and "0 mismatches" in out
    code, out, _ = run(capsys, "equiv", vsc("blind_auction"), "--domain-file", dom, "--traces", "0",
                       "--delete-label", "37")
    assert code == EXIT_FAIL


def test_equiv_domain_override(capsys):
    code, out, _ = run(capsys, "equiv", vsc("simple_contract"), "--domain", "max_calls=2", "--traces", "5", "--json")
    assert code == EXIT_OK and json.loads(out)


def test_run_verify_matches_cli(capsys):
    rep = run_verify(vsc("dao"))
    _, out, _ = run(capsys, "verify", vsc("dao"), "--json")
    cli = json.loads(out)
    assert [p["result"] for p in cli["properties"]] == [p["result"] for p in rep["properties"]]


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "verisol.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
