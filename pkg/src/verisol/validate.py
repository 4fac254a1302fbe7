"""Well-formedness checks for contract models."""
from __future__ import annotations

from typing import Optional

from .model import (
    CONSTRUCTOR, FALLBACK, ArrayType, Call, ContractModel, Diagnostic, Emit, MappingType,
    NamedType, Return, SolType, Stmt, VarDecl, VarRef, is_pure, stmt_exprs, sub_exprs, walk_stmts,
)

RESERVED = {CONSTRUCTOR, FALLBACK}


def _types_in(t: SolType):
    yield t
    match t:
        case MappingType(k, v):
            yield from _types_in(k)
            yield from _types_in(v)
        case ArrayType(e, _):
            yield from _types_in(e)


def _dupes(names, code, what, span, out):
    seen = set()
    for n in names:
        if n in seen:
            out.append(Diagnostic(code, f"{what} {n!r} declared more than once", span))
        seen.add(n)


def validate(model: ContractModel) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    states = set(model.states)
    span = model.span
    _dupes(model.states, "duplicate-state", "state", span, out)
    _dupes([t.name for t in model.transitions], "duplicate-transition", "transition", span, out)
    _dupes([n for n, _ in model.variables], "duplicate-variable", "variable", span, out)
    if model.initial_state not in states:
        out.append(Diagnostic("unknown-state", f"initial state {model.initial_state!r} is not declared", span))
    for f in model.final_states:
        if f not in states:
            out.append(Diagnostic("unknown-state", f"final state {f!r} is not declared", span))

    structs = model.structs()
    events = model.events()
    storage = set(model.var_types())

    def check_type(t: SolType, where):
        for sub in _types_in(t):
            if isinstance(sub, NamedType) and sub.name not in structs:
                out.append(Diagnostic("unknown-type", f"unknown struct type {sub.name!r}", where))

    for _, t in model.variables:
        check_type(t, span)
    for d in structs.values():
        for _, t in d.fields:
            check_type(t, d.span)

    def check_action(owner: str, act: Optional[Stmt], params, returns, where):
        scope = storage | {n for n, _ in params}
        for _, s in walk_stmts(act):
            if isinstance(s, VarDecl):
                if s.name in storage:
                    out.append(Diagnostic("shadowed-variable",
                                          f"local {s.name!r} in {owner} clashes with a contract variable",
                                          s.span or where))
                scope.add(s.name)
                check_type(s.type, s.span or where)
        for _, s in walk_stmts(act):
            if isinstance(s, Return):
                if s.value is not None and returns is None:
                    out.append(Diagnostic("unexpected-return",
                                          f"{owner} returns a value but declares no return type", s.span or where))
            if isinstance(s, Emit) and s.event not in events:
                out.append(Diagnostic("unknown-event", f"event {s.event!r} is not declared", s.span or where))
            for e in stmt_exprs(s):
                check_expr(owner, e, scope, s.span or where)

    def check_expr(owner, e, scope, where):
        for x in sub_exprs(e):
            if isinstance(x, Call) and x.kind == "internal" and x.name not in structs:
                out.append(Diagnostic("unknown-function", f"call to unknown function {x.name!r} in {owner}",
                                      x.span or where))
            if isinstance(x, VarRef) and x.name not in scope and x.name not in structs:
                out.append(Diagnostic("unknown-variable", f"{x.name!r} is not declared (in {owner})",
                                      x.span or where))

    for t in model.transitions:
        where = t.span or span
        if t.name in RESERVED and t.origin is None:
            out.append(Diagnostic("reserved-name", f"{t.name!r} is reserved", where))
        for s in (t.src, t.dst):
            if s not in states:
                out.append(Diagnostic("unknown-state", f"transition {t.name} refers to undeclared state {s!r}", where))
        for _, pt in t.params:
            check_type(pt, where)
        if t.guard is not None:
            if not is_pure(t.guard):
                out.append(Diagnostic("impure-guard", f"guard of {t.name} has side effects", where))
            check_expr(t.name, t.guard, storage | {n for n, _ in t.params}, where)
        check_action(t.name, t.action, t.params, t.returns, where)
    check_action(CONSTRUCTOR, model.initial_action, (), None, span)
    check_action(FALLBACK, model.fallback_action, (), None, span)
    return out
