"""Code emitters: Solidity from the initial model, BIP text, NuSMV from a Kripke structure.

The Solidity output follows the FSM discipline: every function first checks
the source state, then the guard, parks the contract in `InTransition` while
a non-empty action runs (so a re-entrant call fails its state check), and
finally writes the destination state.  Returns inside actions are rewritten
to set the destination state before leaving.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .abstraction import Kripke
from .lexer import ParseError
from .model import (
    Assign, Compound, ContractModel, Diagnostic, EventDef, ExprStmt, For, If, Member, Return,
    Stmt, StructDef, VarRef, While, format_expr, format_stmt, format_type,
)
from .properties import BT, UT, And, Atom, Const, Formula, Implies, Not, Or

PRAGMA = "pragma solidity ^0.4.24;"
IN_TRANSITION = "InTransition"

# words that cannot name a state, variable, parameter or transition in the output
SOLIDITY_RESERVED = frozenset("""
    abstract after alias apply auto case catch constant constructor copyof default define
    delete do else emit enum event external final for function if immutable implements import
    in inline interface internal is let library macro mapping match memory modifier mutable new
    null of override partial payable pragma private promise public pure reference relocatable
    return returns sealed sizeof static storage struct supports switch this throw try typedef
    typeof unchecked using var view virtual while
""".split()) | {"States", "state", "creationTime", IN_TRANSITION}


class CodegenError(ParseError):
    pass


@dataclass(frozen=True)
class EmitterConfig:
    target: str = "solidity"       # solidity | bip | nusmv
    pragma: str = PRAGMA
    indent: str = "    "
    bip_style: str = "template"    # template | listing


# ------------------------------------------------------------------ Solidity

def _check_identifiers(model: ContractModel) -> None:
    diags = []

    def bad(name: str, what: str, span):
        diags.append(Diagnostic("invalid-identifier", f"{what} {name!r} is not usable in Solidity output", span))

    for s in model.states:
        if s in SOLIDITY_RESERVED or not re.fullmatch(r"[A-Za-z_]\w*", s):
            bad(s, "state", model.span)
    for n, _ in model.variables:
        if n in SOLIDITY_RESERVED:
            bad(n, "variable", model.span)
    for t in model.transitions:
        if t.name in SOLIDITY_RESERVED:
            bad(t.name, "transition", t.span)
        for p, _ in t.params:
            if p in SOLIDITY_RESERVED:
                bad(p, "parameter", t.span)
    if diags:
        raise CodegenError(diags)


def _set_state(target: str) -> ExprStmt:
    return ExprStmt(Assign(VarRef("state"), "=", VarRef(target)))


def safe_action(a: Optional[Stmt], target: str) -> Optional[Stmt]:
    """Rewrite every `return` in `a` into `{ state = target; return ...; }`."""
    match a:
        case None:
            return None
        case Return():
            return Compound((_set_state(target), a))
        case If(c, t, o):
            return If(c, safe_action(t, target), safe_action(o, target))
        case For(i, c, af, b):
            return For(i, c, af, safe_action(b, target))
        case While(c, b):
            return While(c, safe_action(b, target))
        case Compound(ss):
            return Compound(tuple(safe_action(s, target) for s in ss))
    return a


def _stmts(a: Optional[Stmt]) -> tuple:
    if a is None:
        return ()
    return a.stmts if isinstance(a, Compound) else (a,)


def _action_lines(a: Optional[Stmt], target: str, ind: int, step: str) -> list[str]:
    """Action(a, s): empty for an empty action, otherwise park in InTransition first."""
    ss = _stmts(a)
    if not ss:
        return []
    out = [step * ind + "//State change", step * ind + f"state = States.{IN_TRANSITION};",
           step * ind + "//Actions"]
    for s in ss:
        out.append(format_stmt(safe_action(s, target), ind, step))
    return out


def _params(t) -> str:
    return ", ".join(f"{format_type(pt)} {pn}" for pn, pt in t.params)


def emit_solidity(model: ContractModel, cfg: EmitterConfig = EmitterConfig()) -> str:
    _check_identifiers(model)
    st = cfg.indent
    s0 = model.initial_state
    L = [cfg.pragma, "", f"contract {model.name} {{", f"{st}//States definition", f"{st}enum States {{"]
    names = [IN_TRANSITION, *model.states]
    L += [f"{st * 2}{n}," for n in names[:-1]] + [f"{st * 2}{names[-1]}", f"{st}}}"]
    L += [f"{st}States private state = States.{s0};", "", f"{st}//Variables definition"]
    for d in model.definitions:
        match d:
            case StructDef(name, fields):
                L.append(f"{st}struct {name} {{")
                L += [f"{st * 2}{format_type(ft)} {fn};" for fn, ft in fields]
                L.append(f"{st}}}")
            case EventDef(name, params):
                L.append(f"{st}event {name}({', '.join(f'{format_type(pt)} {pn}' for pn, pt in params)});")
    for n, t in model.variables:
        L.append(f"{st}{format_type(t)} private {n};")
    L.append(f"{st}uint private creationTime = now;")

    L += ["", f"{st}//Constructor", f"{st}constructor () public {{"]
    L += _action_lines(model.initial_action, f"States.{s0}", 2, st)
    L += [f"{st * 2}//State change", f"{st * 2}state = States.{s0};", f"{st}}}"]

    if model.fallback_action is not None:
        L += ["", f"{st}//Fallback", f"{st}function () payable public {{",
              f"{st * 2}States currentState = state;"]
        L += _action_lines(model.fallback_action, "currentState", 2, st)
        L += [f"{st * 2}state = currentState;", f"{st}}}"]

    L += ["", f"{st}//Transitions"]
    for t in model.transitions:
        mods = "public" + (" payable" if t.payable else "")
        if t.returns is not None:
            mods += f" returns ({format_type(t.returns)})"
        L += ["", f"{st}//Transition {t.name}", f"{st}function {t.name}({_params(t)}) {mods}", f"{st}{{",
              f"{st * 2}require(state == States.{t.src});"]
        if t.guard is not None:
            L += [f"{st * 2}//Guards", f"{st * 2}require({format_expr(t.guard)});"]
        L += _action_lines(t.action, f"States.{t.dst}", 2, st)
        L += [f"{st * 2}//State change", f"{st * 2}state = States.{t.dst};", f"{st}}}"]
    L.append("}")
    return "\n".join(L) + "\n"


# ----------------------------------------------------------------------- BIP

def _inline(a: Optional[Stmt], ind: int, step: str) -> str:
    ss = _stmts(a)
    lines = [format_stmt(s) for s in ss]
    if all("\n" not in x for x in lines):
        return "{ " + " ".join(lines) + " }"
    body = "\n".join(format_stmt(s, ind + 1, step) for s in ss)
    return "{\n" + body + "\n" + step * ind + "}"


def _bip_clause(head: str, guard, action, ind: int, step: str) -> str:
    out = step * ind + head
    if guard is not None:
        out += f" provided ({format_expr(guard)})"
    if _stmts(action):
        out += " do " + _inline(action, ind, step)
    return out


def atom_name(model: ContractModel) -> str:
    base = model.name.removesuffix("Contract") or model.name
    return base + "FSM"


def emit_bip(model: ContractModel, style: str = "template", step: str = "\t") -> str:
    """BIP atom for the contract.

    `template` follows the generic shape (one exported port per transition);
    `listing` is the package form with a shared port type and no exports.
    """
    if style == "template":
        L = [f"atom type {model.name}()"]
        L += [f"{step}data {format_type(t)} {n}" for n, t in model.variables]
        L += [f"{step}export port synPort {t.name}()" for t in model.transitions]
        L.append(f"{step}places {', '.join(model.states)}")
        L.append(_bip_clause(f"initial to {model.initial_state}", None, model.initial_action, 1, step))
        for t in model.transitions:
            L.append(_bip_clause(f"on {t.name} from {t.src} to {t.dst}", t.guard, t.action, 1, step))
        L.append("end")
    elif style == "listing":
        L = [f"package {model.name}", f"{step}port type portType()", f"{step}atom type {atom_name(model)}()"]
        L += [f"{step * 2}data {format_type(t)} {n}" for n, t in model.variables]
        L.append(f"{step * 2}place {', '.join(model.states)}")
        L.append(_bip_clause(f"initial to {model.initial_state}", None, model.initial_action, 2, step))
        for t in model.transitions:
            L.append(_bip_clause(f"on {t.name} from {t.src} to {t.dst}", t.guard, t.action, 2, step))
        L += [f"{step}end", "end"]
    else:
        raise ValueError(f"unknown BIP style {style!r}")
    return "\n".join(L) + "\n"


# -------------------------------------------------------------------- NuSMV

MAX_NUSMV_STATES = 200_000


def _ident(lab: str) -> str:
    return "l_" + re.sub(r"\W", "_", lab)


def _label_names(ks: Kripke) -> dict[str, str]:
    labs = sorted({s.last for s in ks.states if s.last is not None})
    out, used = {}, set()
    for lab in labs:
        name = _ident(lab)
        while name in used:
            name += "_"
        used.add(name)
        out[lab] = name
    return out


def nusmv_formula(f: Formula, names: dict[str, str]) -> str:
    """CTL over edge-label atoms in NuSMV syntax; weak until is expanded."""
    def atom(n: str) -> str:
        if n == "deadlock":
            return "deadlock"
        return f"lastlab = {names[n]}" if n in names else "FALSE"

    def go(g: Formula) -> str:
        match g:
            case Atom(n):
                return f"({atom(n)})"
            case Const(v):
                return "TRUE" if v else "FALSE"
            case Not(a):
                return f"!{go(a)}"
            case And(a, b):
                return f"({go(a)} & {go(b)})"
            case Or(a, b):
                return f"({go(a)} | {go(b)})"
            case Implies(a, b):
                return f"({go(a)} -> {go(b)})"
            case UT(op, a):
                return f"{op} {go(a)}"
            case BT("AU", a, b):
                return f"A[{go(a)} U {go(b)}]"
            case BT("EU", a, b):
                return f"E[{go(a)} U {go(b)}]"
            case BT("AW", a, b):
                # A[p W q] = !E[!q U (!p & !q)]
                return f"!E[!{go(b)} U (!{go(a)} & !{go(b)})]"
            case BT("EW", a, b):
                return f"(E[{go(a)} U {go(b)}] | EG {go(a)})"
        raise TypeError(g)
    return go(f)


def emit_nusmv(ks: Kripke, specs: Sequence[tuple[Formula, str]] = ()) -> str:
    """Flat MODULE main: `loc` enumerates states, `lastlab` is the label that entered each one.

    States without successors get a self-loop, the same stuttering the
    built-in checker uses.  `specs` are (label-resolved formula, comment) pairs.
    """
    n = len(ks.states)
    if n > MAX_NUSMV_STATES:
        raise ValueError(f"{n} states exceed the NuSMV enum limit of {MAX_NUSMV_STATES}")
    names = _label_names(ks)
    L = ["MODULE main", "VAR", f"  loc : {{{', '.join(f'k{i}' for i in range(n))}}};", "ASSIGN"]
    inits = [f"k{i}" for i in ks.initial]
    L.append(f"  init(loc) := {inits[0] if len(inits) == 1 else '{' + ', '.join(inits) + '}'};")
    L.append("  next(loc) := case")
    for i in range(n):
        succ = sorted({j for _, j in ks.total_succ(i)})
        tgt = f"k{succ[0]}" if len(succ) == 1 else "{" + ", ".join(f"k{j}" for j in succ) + "}"
        L.append(f"    loc = k{i} : {tgt};")
    L += ["  esac;", "DEFINE"]
    vals = ["none", *names.values()]
    L.append("  lastlab := case")
    for i, s in enumerate(ks.states):
        if s.last is not None:
            L.append(f"    loc = k{i} : {names[s.last]};")
    L += ["    TRUE : none;", "  esac;"]
    dead = sorted(ks.deadlocks)
    L.append(f"  deadlock := {' | '.join(f'loc = k{i}' for i in dead) if dead else 'FALSE'};")
    L.append(f"-- lastlab ranges over: {', '.join(vals)}")
    for f, comment in specs:
        if comment:
            L.append(f"-- {comment}")
        L.append(f"CTLSPEC {nusmv_formula(f, names)};")
    return "\n".join(L) + "\n"


# ------------------------------------------------------------------ dispatch

def emit(model: ContractModel, cfg: EmitterConfig = EmitterConfig(), ks: Optional[Kripke] = None,
         specs: Sequence[tuple[Formula, str]] = ()) -> str:
    match cfg.target:
        case "solidity":
            return emit_solidity(model, cfg)
        case "bip":
            return emit_bip(model, cfg.bip_style)
        case "nusmv":
            if ks is None:
                raise ValueError("nusmv output needs a Kripke structure")
            return emit_nusmv(ks, specs)
    raise ValueError(f"unknown target {cfg.target!r}")
