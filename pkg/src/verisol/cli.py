"""`verisol` command line: verify, generate, simulate, augment, equiv, atoms.

Exit codes: 0 when everything checked holds, 1 when a property is violated
or models are not equivalent, 2 on usage, parse or resource errors.
"""
from __future__ import annotations

import argparse
import json
import random
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__
from .abstraction import StateCapExceeded, UnsupportedTimeGuard, state_cap
from .checker import build_views, check_deadlock, plan_property, verify_property
from .codegen import EmitterConfig, CodegenError, emit_bip, emit_nusmv, emit_solidity
from .lexer import ParseError
from .model import Diagnostic
from .parser import load_contract
from .properties import DEADLOCK_FREE, load_props, parse_property, render, to_ctl
from .semantics import DeployError, ExternalEnvironment, run_trace
from .transform import UnknownAtom, augment_model, run_augmented_trace

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


def _emit_error(args, code: str, msg: str, diags=()) -> int:
    payload = {"error": code, "message": msg, "diagnostics": [d.to_json() for d in diags]}
    print(json.dumps(payload, indent=2 if getattr(args, "json", False) else None), file=sys.stderr)
    return EXIT_ERROR


def _write(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _specs(model, props_file: Optional[str]):
    specs = [parse_property(p.text, p.ctl) for p in model.properties]
    if props_file:
        specs += load_props(props_file)
    return specs


# -------------------------------------------------------------------- verify

def run_verify(path: str, props: Optional[str] = None, augment: bool = False, cap: Optional[int] = None,
               jobs: int = 1) -> dict:
    """Verification report as a plain dict (the `--json` payload)."""
    timings = {}
    t0 = time.perf_counter()
    model = load_contract(path)
    specs = _specs(model, props)
    timings["parse"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    views = build_views(model, cap)
    timings["abstract"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        verdicts = list(pool.map(lambda s: verify_property(views, s, augment), specs))
    dead = {"initial": check_deadlock(views.initial), "augmented": check_deadlock(views.augmented)}
    timings["check"] = time.perf_counter() - t0
    props_out = []
    for i, v in enumerate(verdicts, 1):
        d = v.to_json()
        d["index"] = i
        props_out.append(d)
    dl = {}
    for k, v in dead.items():
        dl[k] = {"result": "Verified" if v.holds else "Violated"}
        if not v.holds:
            dl[k]["witness"] = [getattr(views, k).describe(i) for i in v.trace]
            dl[k]["labels"] = v.labels
    return {
        "contract": model.name,
        "file": str(path),
        "properties": props_out,
        "deadlock": dl,
        "states": {"initial": len(views.initial), "augmented": len(views.augmented)},
        "timings": {k: round(x, 6) for k, x in timings.items()},
        "legend": {str(e.label): f"{e.origin} {e.role}: {e.describe()}" for e in views.aug.transitions},
        "all_hold": all(p["result"] == "Verified" for p in props_out)
        and all(d["result"] == "Verified" for d in dl.values()),
    }


def format_report(rep: dict) -> str:
    rows = [("Properties", "Type", "Result")]
    for p in rep["properties"]:
        rows.append((f"({p['index']}) {p['property']}", p["kind"], p["result"]))
    for k, d in rep["deadlock"].items():
        rows.append((f"deadlock freedom ({k} model)", "Safety", d["result"]))
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    out = [f"{rep['contract']}  states: initial {rep['states']['initial']}, augmented {rep['states']['augmented']}"]
    for i, r in enumerate(rows):
        out.append(f"{r[0].ljust(w0)}  {r[1].ljust(w1)}  {r[2]}")
        if i == 0:
            out.append("-" * (w0 + w1 + 12))
            continue
        p = rep["properties"][i - 1] if i - 1 < len(rep["properties"]) else None
        if p is not None:
            out.append(f"    {p['formula']}   [{p['model']} model]")
            if p["result"] == "Violated":
                trace = " -> ".join(p["trace"])
                out.append(f"    counterexample: {trace}" + (f" (loops back to step {p['loop']})" if "loop" in p else ""))
    for k, d in rep["deadlock"].items():
        if d["result"] == "Violated":
            out.append(f"deadlock witness ({k}): " + " | ".join(d["witness"]))
    return "\n".join(out) + "\n"


def cmd_verify(args) -> int:
    rep = run_verify(args.file, args.props, args.augment, args.state_cap, args.jobs)
    if args.emit_kripke:
        views = build_views(load_contract(args.file), args.state_cap)
        Path(args.emit_kripke).write_text(json.dumps(
            {"initial": views.initial.to_json(), "augmented": views.augmented.to_json()}, indent=1))
    if args.json:
        print(json.dumps(rep, indent=2))
    else:
        sys.stdout.write(format_report(rep))
    return EXIT_OK if rep["all_hold"] else EXIT_FAIL


# ------------------------------------------------------------------ generate

def cmd_generate(args) -> int:
    model = load_contract(args.file)
    if args.require_verified:
        rep = run_verify(args.file, args.props, False, args.state_cap)
        if not rep["all_hold"]:
            failed = [p["property"] for p in rep["properties"] if p["result"] != "Verified"]
            failed += [f"deadlock freedom ({k})" for k, d in rep["deadlock"].items() if d["result"] != "Verified"]
            return _emit_error(args, "not-verified", "refusing to generate: " + "; ".join(failed))
    if args.target == "solidity":
        text = emit_solidity(model, EmitterConfig(pragma=args.pragma))
    elif args.target == "bip":
        text = emit_bip(model, args.bip_style)
    else:
        # the augmented structure carries every atom a property can name
        views = build_views(model, args.state_cap)
        specs = []
        for sp in _specs(model, args.props):
            f = to_ctl(sp)
            specs.append((plan_property(views, f, True)[1], f"{sp.text}: {render(f)}"))
        specs.append((DEADLOCK_FREE, "deadlock freedom"))
        text = emit_nusmv(views.augmented, specs)
    _write(args.output, text)
    return EXIT_OK


# ------------------------------------------------------------------ simulate

def cmd_simulate(args) -> int:
    from .equivalence import calls_from_json
    model = load_contract(args.file)
    try:
        data = json.loads(Path(args.trace).read_text())
        if isinstance(data, list):
            data = {"calls": data}
        ctor = ExternalEnvironment.from_json(data.get("constructor", {"sender": 1, "now": 0}))
        calls = calls_from_json(model, data["calls"])
    except (OSError, ValueError, KeyError, TypeError) as e:
        return _emit_error(args, "malformed-trace", f"cannot read trace file: {e}")
    if args.augmented:
        tr = run_augmented_trace(augment_model(model), ctor, calls)
    else:
        tr = run_trace(model, ctor, calls)
    if args.json:
        print(tr.dumps())
    else:
        print(f"initial state: {tr.initial_state}")
        for i, s in enumerate(tr.steps):
            ev = f" events={s.events}" if s.events else ""
            val = f" value={s.value!r}" if s.value is not None else ""
            print(f"{i:3d}  {s.call:<18} {s.verdict:<20} -> {s.state}{val}{ev}")
        print(f"final state: {tr.final_state}")
        print(json.dumps(tr.ledger.to_json(), indent=2))
    return EXIT_OK


# ------------------------------------------------------------ augment / atoms

def cmd_augment(args) -> int:
    aug = augment_model(load_contract(args.file))
    if args.json:
        print(json.dumps({"contract": aug.name, "states": list(aug.states), "stable": list(aug.stable_states),
                          "transitions": [{"label": e.label, "origin": e.origin, "role": e.role, "src": e.src,
                                           "dst": e.dst, "text": e.describe()} for e in aug.transitions]},
                         indent=2))
    else:
        print(aug.legend())
    if args.emit_augmented:
        _write(args.emit_augmented, aug.to_vsc())
    return EXIT_OK


def cmd_atoms(args) -> int:
    aug = augment_model(load_contract(args.file))
    if args.json:
        print(json.dumps({"aliases": dict(aug.aliases), "transitions": sorted(aug.origins()),
                          "labels": {str(e.label): f"{e.origin} {e.role}: {e.describe()}" for e in aug.transitions}},
                         indent=2))
        return EXIT_OK
    if aug.aliases:
        print("aliases:")
        for k, v in aug.aliases.items():
            print(f"  {k} = {v}")
    print("transitions: " + ", ".join(sorted(aug.origins())))
    print(aug.legend())
    return EXIT_OK


# --------------------------------------------------------------------- equiv

def _domain_overrides(pairs: list[str]) -> dict:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise UsageError(f"--domain expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        try:
            out[k] = json.loads(v)
        except ValueError:
            out[k] = [json.loads(x) for x in v.split(",")]
    return out


def cmd_equiv(args) -> int:
    from .equivalence import Domain, check_weak_bisim, build_lts_augmented, build_lts_initial, \
        compare_traces, delete_edge, describe_label, random_calls, call_alphabet
    model = load_contract(args.file)
    base = json.loads(Path(args.domain_file).read_text()) if args.domain_file else {}
    base.update(_domain_overrides(args.domain or []))
    dom = Domain.from_json(base)
    aug = augment_model(model)
    if args.delete_label is not None:
        aug = delete_edge(aug, args.delete_label)
    rng = random.Random(args.seed)
    mismatches = []
    for _ in range(args.traces):
        calls = random_calls(model, dom, rng, rng.randint(0, args.trace_length))
        m = compare_traces(model, aug, calls, dom.ctor_env)
        if m:
            mismatches.append(m)
    cap = args.state_cap or state_cap()
    a = build_lts_initial(model, dom, cap)
    b = build_lts_augmented(aug, dom, cap)
    res = check_weak_bisim(a, b)
    alphabet = call_alphabet(model, dom)
    rep = {"contract": model.name, "traces": args.traces, "trace_mismatches": len(mismatches),
           "first_mismatch": mismatches[0] if mismatches else None,
           "bisimilar": res.related, "lts_sizes": list(res.sizes), "reason": res.reason,
           "witness": [describe_label(l, alphabet) for l in res.witness] if res.witness else None}
    if args.json:
        print(json.dumps(rep, indent=2))
    else:
        print(f"{model.name}: {args.traces} random traces, {len(mismatches)} mismatches")
        if mismatches:
            print(f"  first: {mismatches[0]}")
        print(f"weak bisimulation ({res.sizes[0]} vs {res.sizes[1]} states): "
              f"{'holds' if res.related else 'fails'}")
        if not res.related:
            print(f"  {res.reason}")
            for l in rep["witness"] or []:
                print(f"    {l}")
    return EXIT_OK if res.related and not mismatches else EXIT_FAIL


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="verisol", description="FSM smart-contract verifier and code generator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, props=True):
        sp.add_argument("file", help="contract (.vsc)")
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.add_argument("--state-cap", type=int, default=None,
                        help="max abstract states (default: $VERISOL_STATE_CAP or 1000000)")
        if props:
            sp.add_argument("--props", help="extra properties, one per line ('ctl ' prefix for raw CTL)")

    v = sub.add_parser("verify", help="check properties and deadlock freedom")
    common(v)
    v.add_argument("--augment", action="store_true", help="check every property on the augmented model")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--emit-kripke", metavar="FILE", help="write both Kripke structures as JSON")
    v.set_defaults(fn=cmd_verify)

    g = sub.add_parser("generate", help="emit Solidity, BIP or NuSMV")
    common(g)
    g.add_argument("--target", choices=("solidity", "bip", "nusmv"), required=True)
    g.add_argument("-o", "--output", default="-")
    g.add_argument("--bip-style", choices=("template", "listing"), default="template")
    g.add_argument("--pragma", default=EmitterConfig().pragma)
    g.add_argument("--require-verified", action="store_true", help="refuse to emit unless everything verifies")
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("simulate", help="replay a JSON call trace")
    common(s, props=False)
    s.add_argument("trace", help="JSON: {constructor: env, calls: [{name, args, env}]}")
    s.add_argument("--augmented", action="store_true", help="run on the augmented model")
    s.set_defaults(fn=cmd_simulate)

    a = sub.add_parser("augment", help="show the augmented model")
    common(a, props=False)
    a.add_argument("--emit-augmented", metavar="FILE", help="write the augmented model as .vsc text")
    a.set_defaults(fn=cmd_augment)

    e = sub.add_parser("equiv", help="differential traces and weak bisimulation, initial vs augmented")
    common(e, props=False)
    e.add_argument("--domain", action="append", metavar="KEY=VALUE",
                   help="domain override, e.g. senders=1,2 or max_calls=4 (JSON values allowed)")
    e.add_argument("--domain-file", help="domain JSON")
    e.add_argument("--traces", type=int, default=1000)
    e.add_argument("--trace-length", type=int, default=8)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--delete-label", type=int, default=None, help="check a mutant without this edge")
    e.set_defaults(fn=cmd_equiv)

    t = sub.add_parser("atoms", help="list names usable in properties")
    common(t, props=False)
    t.set_defaults(fn=cmd_atoms)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (ParseError, CodegenError) as e:
        return _emit_error(args, "parse-error", str(e), e.diagnostics)
    except UnsupportedTimeGuard as e:
        return _emit_error(args, "unsupported-time-guard", str(e), [e.diagnostic])
    except StateCapExceeded as e:
        return _emit_error(args, "state-cap-exceeded", f"state cap exceeded: {e}")
    except UnknownAtom as e:
        return _emit_error(args, "unknown-atom", str(e))
    except (DeployError, UsageError) as e:
        return _emit_error(args, type(e).__name__, str(e))
    except OSError as e:
        return _emit_error(args, "io-error", str(e))


if __name__ == "__main__":
    sys.exit(main())
