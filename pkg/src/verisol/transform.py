"""Conformance and augmentation of contract models.

`conformance` turns the constructor and fallback into ordinary transitions;
`augment_model` then splits every transition into guard, revert and
statement-level edges so that each edge carries at most one simple
statement.  Edges get numeric labels in creation order; those labels are the
atoms the checker talks about.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Optional, Sequence

from .lexer import ParseError, token_texts
from .model import (
    CONSTRUCTOR, FALLBACK, ArrayType, Assign, Binary, Call, Compound, ContractModel, Diagnostic,
    ElemType, Emit, Expr, ExprStmt, For, If, Index, Literal, MappingType, Member, NamedType,
    Return, SolType, StatementId, Stmt, Transition, Unary, VarDecl, VarRef, While, format_action,
    format_expr, format_stmt, format_type, sub_exprs, stmt_exprs, walk_stmts,
)
from .semantics import (
    N, CallSpec, DeployError, ExecutionState, ExternalEnvironment, FireResult, Interpreter,
    LedgerState, Trace, TraceStep, coerce, initial_balances,
)

INITIAL = "s_init"
ROLES = ("guard-entry", "revert", "no-revert", "branch-true", "branch-false", "loop-exit",
         "loop-enter", "statement", "return", "empty")
MAX_PATH_EDGES = 1_000_000


# ---------------------------------------------------------------- conformance

def _fresh(name: str, taken: set[str]) -> str:
    if name not in taken:
        return name
    k = 1
    while f"{name}_{k}" in taken:
        k += 1
    return f"{name}_{k}"


def conformance(model: ContractModel, warnings: Optional[list] = None) -> ContractModel:
    """Fallback becomes a self-loop on every state; constructor an edge from a new initial state."""
    taken = set(model.states)
    s_init = _fresh(INITIAL, taken)
    if s_init != INITIAL and warnings is not None:
        warnings.append(Diagnostic("renamed-state", f"initial state renamed to {s_init!r}", severity="warning"))
    tnames = {t.name for t in model.transitions}
    ctor = Transition(CONSTRUCTOR, s_init, model.initial_state, action=model.initial_action,
                      payable=True, origin=CONSTRUCTOR)
    loops = []
    if model.fallback_action is not None:
        for s in model.states:
            n = _fresh(f"{FALLBACK}_{s}", tnames)
            tnames.add(n)
            loops.append(Transition(n, s, s, action=model.fallback_action, payable=True, origin=FALLBACK))
    return replace(model, states=(s_init,) + tuple(model.states), initial_state=s_init,
                   transitions=(ctor,) + tuple(model.transitions) + tuple(loops),
                   initial_action=None, fallback_action=None)


# ---------------------------------------------------------- may-raise analysis

class TypeScope:
    def __init__(self, model: ContractModel, params=(), action: Optional[Stmt] = None):
        self.structs = model.structs()
        self.types: dict[str, SolType] = dict(model.var_types())
        self.types.update(dict(params))
        for _, s in walk_stmts(action):
            if isinstance(s, VarDecl):
                self.types[s.name] = s.type

    def type_of(self, e: Expr) -> Optional[SolType]:
        match e:
            case VarRef(name):
                return self.types.get(name)
            case Index(base, _):
                bt = self.type_of(base)
                if isinstance(bt, MappingType):
                    return bt.value
                if isinstance(bt, ArrayType):
                    return bt.elem
                return None
            case Member(base, f):
                if f == "length":
                    return ElemType("uint")
                bt = self.type_of(base)
                if isinstance(bt, NamedType) and bt.name in self.structs:
                    return dict(self.structs[bt.name].fields).get(f)
                return None
        return None


def _nonzero_literal(e: Expr) -> bool:
    return isinstance(e, Literal) and isinstance(e.value, int) and not isinstance(e.value, bool) and e.value != 0


def expr_may_raise(e: Expr, scope: TypeScope) -> bool:
    for x in sub_exprs(e):
        match x:
            case Call(kind=k) if k in ("transfer", "send", "low-level-call"):
                return True
            case Binary(op=op, rhs=r) if op in ("/", "%") and not _nonzero_literal(r):
                return True
            case Assign(op=op, value=v) if op in ("/=", "%=") and not _nonzero_literal(v):
                return True
            case Index(base=b):
                # mappings answer every key; arrays (or anything we cannot type) may be out of range
                if not isinstance(scope.type_of(b), MappingType):
                    return True
    return False


def may_raise(action: Optional[Stmt], scope: TypeScope) -> bool:
    return any(expr_may_raise(e, scope) for _, s in walk_stmts(action) for e in stmt_exprs(s))


# ---------------------------------------------------------------- augmentation

@dataclass(frozen=True)
class AugTransition:
    label: int
    src: str
    dst: str
    transition: str                 # conformed transition this edge belongs to
    origin: str                     # user-facing name: fallback copies report "fallback"
    role: str
    guard: Optional[Expr] = None    # branch/entry guard; None means true
    action: Optional[Stmt] = None
    stmt_id: Optional[StatementId] = None

    @property
    def is_revert(self) -> bool:
        return self.role == "revert"

    def describe(self) -> str:
        match self.role:
            case "guard-entry":
                return f"[{format_expr(self.guard)}]" if self.guard is not None else "[true]"
            case "revert" | "no-revert":
                return f"[{'revert' if self.role == 'revert' else '!revert'}]"
            case "branch-true" | "branch-false" | "loop-exit" | "loop-enter":
                return f"[{format_expr(self.guard)}]"
            case "empty":
                return "(no action)"
        return format_stmt(self.action).strip()


class Builder:
    def __init__(self, states: Sequence[str]):
        self.states: list[str] = list(states)
        self.taken = set(states)
        self.edges: list[AugTransition] = []
        self.t: Optional[Transition] = None
        self.k = 0

    def new_state(self, name: Optional[str] = None) -> str:
        if name is None:
            self.k += 1
            name = f"{self.t.name}_{self.k}"
            while name in self.taken:
                self.k += 1
                name = f"{self.t.name}_{self.k}"
        else:
            name = _fresh(name, self.taken)
        self.taken.add(name)
        self.states.append(name)
        return name

    def edge(self, src, dst, role, guard=None, action=None, path=None):
        sid = StatementId(self.t.origin_name, path) if path is not None else None
        self.edges.append(AugTransition(len(self.edges) + 1, src, dst, self.t.name, self.t.origin_name,
                                        role, guard, action, sid))


def _negate(c: Expr) -> Expr:
    return Unary("!", c)


def augment_statement(a: Optional[Stmt], s_o: str, s_d: str, s_r: str, b: Builder,
                      path: tuple[int, ...] = ()) -> None:
    match a:
        case None:
            b.edge(s_o, s_d, "empty")
        case VarDecl() | Emit() | ExprStmt():
            b.edge(s_o, s_d, "statement", action=a, path=path)
        case Return():
            b.edge(s_o, s_r, "return", action=a, path=path)
        case Compound(stmts=()):
            b.edge(s_o, s_d, "empty", path=path)
        case Compound(stmts=ss):
            mids = [b.new_state() for _ in ss[:-1]]
            chain = [s_o] + mids + [s_d]
            for i, x in enumerate(ss):
                augment_statement(x, chain[i], chain[i + 1], s_r, b, path + (i,))
        case If(c, t, None):
            s_t = b.new_state()
            b.edge(s_o, s_t, "branch-true", guard=c, path=path)
            augment_statement(t, s_t, s_d, s_r, b, path + (0,))
            b.edge(s_o, s_d, "branch-false", guard=_negate(c), path=path)
        case If(c, t, o):
            s_t = b.new_state()
            b.edge(s_o, s_t, "branch-true", guard=c, path=path)
            augment_statement(t, s_t, s_d, s_r, b, path + (0,))
            s_f = b.new_state()
            b.edge(s_o, s_f, "branch-false", guard=_negate(c), path=path)
            augment_statement(o, s_f, s_d, s_r, b, path + (1,))
        case For(init, c, after, body):
            s_i, s_c, s_b = b.new_state(), b.new_state(), b.new_state()
            augment_statement(init, s_o, s_i, s_r, b, path + (0,))
            b.edge(s_i, s_d, "loop-exit", guard=_negate(c), path=path)
            b.edge(s_i, s_c, "loop-enter", guard=c, path=path)
            augment_statement(body, s_c, s_b, s_r, b, path + (1,))
            augment_statement(ExprStmt(after), s_b, s_i, s_r, b, path + (2,))
        case While(c, body):
            s_l = b.new_state()
            b.edge(s_o, s_d, "loop-exit", guard=_negate(c), path=path)
            b.edge(s_o, s_l, "loop-enter", guard=c, path=path)
            augment_statement(body, s_l, s_o, s_r, b, path + (0,))
        case _:
            raise TypeError(f"cannot augment {type(a).__name__}")


@dataclass
class AugmentedModel:
    name: str
    states: tuple[str, ...]
    initial_state: str
    final_states: tuple[str, ...]
    stable_states: tuple[str, ...]
    transitions: tuple[AugTransition, ...]
    conformed: ContractModel
    original: ContractModel
    aliases: dict = field(default_factory=dict)

    @property
    def variables(self):
        return self.conformed.variables

    @cached_property
    def out_edges(self) -> dict[str, list[AugTransition]]:
        out: dict[str, list[AugTransition]] = {s: [] for s in self.states}
        for e in self.transitions:
            out[e.src].append(e)
        return out

    def edge(self, label: int) -> AugTransition:
        return self.transitions[label - 1]

    def source_transition(self, name: str) -> Transition:
        return self.conformed.transition(name)

    def origins(self) -> list[str]:
        seen = []
        for e in self.transitions:
            if e.origin not in seen:
                seen.append(e.origin)
        return seen

    def legend(self) -> str:
        rows = [("label", "origin", "role", "edge", "text")]
        for e in self.transitions:
            rows.append((str(e.label), e.origin, e.role, f"{e.src} -> {e.dst}", e.describe()))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r[:4], widths)) + "  " + r[4] for r in rows)

    def to_vsc(self) -> str:
        """Display form of the augmented model in the contract DSL (labels in edge names)."""
        m = self.original
        lines = [f"// augmented form of {m.name}; edge e<k> carries label k",
                 f"contract {m.name}Augmented {{",
                 f"    states {', '.join(self.states)};",
                 f"    initial {self.initial_state};"]
        if self.final_states:
            lines.append(f"    final {', '.join(self.final_states)};")
        if m.variables:
            lines.append("    vars {")
            lines += [f"        {format_type(t)} {n};" for n, t in m.variables]
            lines.append("    }")
        for e in self.transitions:
            t = self.source_transition(e.transition)
            params = ", ".join(f"{format_type(pt)} {pn}" for pn, pt in t.params) if e.role == "guard-entry" else ""
            head = f"    // {e.label}: {e.origin} {e.role}\n    transition e{e.label}({params}) from {e.src} to {e.dst}"
            if e.role == "guard-entry" and t.payable:
                head += " payable"
            if e.role in ("revert", "no-revert"):
                head += f" /* {'revert' if e.role == 'revert' else '!revert'} */"
            elif e.guard is not None:
                head += f" guard {format_expr(e.guard)}"
            body = format_stmt(e.action, 2).rstrip() if e.action is not None else ""
            lines.append(head + (" {\n" + body + "\n    }" if body else " { }"))
        lines.append("}")
        return "\n".join(lines) + "\n"


def augment_model(model: ContractModel, conformed: bool = False) -> AugmentedModel:
    """Apply conformance (unless already done) and split every transition."""
    original = model
    if not conformed:
        model = conformance(model)
    b = Builder(model.states)
    for t in model.transitions:
        b.t, b.k = t, 0
        s_grd = b.new_state(t.name)
        b.edge(t.src, s_grd, "guard-entry", guard=t.guard)
        start = s_grd
        if may_raise(t.action, TypeScope(model, t.params, t.action)):
            b.edge(s_grd, t.src, "revert")
            start = b.new_state()
            b.edge(s_grd, start, "no-revert")
        augment_statement(t.action, start, t.dst, t.dst, b)
    return AugmentedModel(model.name, tuple(b.states), model.initial_state, tuple(model.final_states),
                          tuple(model.states), tuple(b.edges), model, original, dict(model.aliases))


# --------------------------------------------------------- atom resolution

class UnknownAtom(KeyError):
    def __init__(self, name: str, legend: str):
        super().__init__(name)
        self.name = name
        self.legend = legend

    def __str__(self):
        return f"cannot resolve {self.name!r}; known labels:\n{self.legend}"


def _stmt_matches(e: AugTransition, text: str) -> bool:
    from .parser import parse_expression, parse_statement
    body = text.strip()
    want_stmt = want_expr = None
    try:
        want_stmt = parse_statement(body if body.endswith((";", "}")) else body + ";")
    except ParseError:
        pass
    try:
        want_expr = parse_expression(body.rstrip(";"))
    except ParseError:
        pass
    if e.action is not None:
        if want_stmt is not None and e.action == want_stmt:
            return True
        toks = [x for x in token_texts(format_stmt(e.action)) if x != ";"]
        return toks == [x for x in token_texts(body) if x != ";"]
    if e.role == "branch-true" and e.guard is not None and want_expr is not None:
        return e.guard == want_expr
    return False


def resolve_atom(aug: AugmentedModel, name: str, _seen: Optional[set] = None) -> set[str]:
    """Map a property name to augmented edge labels.

    Alias keys first, then bare labels, transition names (the final edges of
    completed runs; a revert leaves no trace, as in the initial view),
    `t.<role>` and `t.stmt`.
    """
    seen = _seen or set()
    if name in aug.aliases and name not in seen:
        seen.add(name)
        return resolve_atom(aug, aug.aliases[name], seen)
    if name.isdigit() and 1 <= int(name) <= len(aug.transitions):
        return {name}
    if name == "deadlock":
        return {"deadlock"}
    stable = set(aug.stable_states)
    origins = aug.origins()
    if name in origins:
        return {str(e.label) for e in aug.transitions
                if e.origin == name and e.role not in ("guard-entry", "revert") and e.dst in stable}
    head, dot, rest = name.partition(".")
    if dot and head in origins:
        if rest.startswith("<") and rest.endswith(">"):
            role = rest[1:-1]
            hits = {str(e.label) for e in aug.transitions if e.origin == head and e.role == role}
        else:
            hits = {str(e.label) for e in aug.transitions if e.origin == head and _stmt_matches(e, rest)}
        if hits:
            return hits
    raise UnknownAtom(name, aug.legend())


# ------------------------------------------------------- augmented execution

@dataclass
class AugFireResult(FireResult):
    path: tuple = ()


class AugmentedRunner:
    """Fires calls on an augmented model by walking its internal edges to the next stable state."""

    def __init__(self, aug: AugmentedModel):
        self.aug = aug
        self.it = Interpreter(aug.original)
        self.stable = set(aug.stable_states)

    def entry_edges(self, state: str, name: str) -> list[AugTransition]:
        return [e for e in self.aug.out_edges[state] if e.role == "guard-entry" and e.origin == name]

    def run_path(self, st: ExecutionState, cur: str, env: ExternalEnvironment, path: list):
        """Follow the deterministic internal edges from `cur` until a stable state is reached."""
        value, kind = None, "N"
        for _ in range(MAX_PATH_EDGES):
            if cur in self.stable:
                return cur, kind, value, ""
            taken = None
            for e in self.aug.out_edges[cur]:
                if e.role in ("revert", "no-revert"):
                    raise RuntimeError("run_path reached an unresolved revert choice")
                if e.guard is None:
                    taken = e
                    break
                _, gs, g = self.it.eval_expr(st, e.guard, env)
                if gs.kind == "E":
                    return cur, "E", None, gs.reason
                if g:
                    taken = e
                    break
            if taken is None:
                return cur, "S", None, f"no enabled internal edge at {cur}"
            path.append(taken.label)
            st, status = self.it.exec(st, N, taken.action, env)
            if status.kind == "E":
                return cur, "E", None, status.reason
            if status.kind == "R":
                value, kind = status.value, "R"
            cur = taken.dst
        return cur, "E", None, "path bound exceeded"

    def fire(self, ledger: LedgerState, state: str, name: str, args: Sequence[Any],
             env: ExternalEnvironment) -> AugFireResult:
        if env.now is not None:
            ledger.now = env.now
        if env.block_number is not None:
            ledger.block_number = env.block_number
        pre = ledger.copy()
        declared = {t.origin_name for t in self.aug.conformed.transitions} - {FALLBACK}
        is_fallback = name not in declared or (name == CONSTRUCTOR and state != self.aug.initial_state)
        origin = FALLBACK if is_fallback else name
        entries = self.entry_edges(state, origin)
        if not entries:
            if is_fallback:
                return AugFireResult(pre, state, None, "TRANSITION-EXC3", "no fallback")
            return AugFireResult(pre, state, None, "TRANSITION-WRO")
        entry = entries[0]
        t = self.aug.source_transition(entry.transition)
        if len(args) != len(t.params):
            return AugFireResult(pre, state, None, "ARITY", f"expected {len(t.params)} arguments")
        fail = "TRANSITION-EXC3" if is_fallback else "TRANSITION-EXC2"
        led = ledger.copy()
        if (env.value and not t.payable) or not self.it.move_value(led, env):
            return AugFireResult(pre, state, None, fail, "value rejected")
        st = ExecutionState(led)
        for (pname, ptype), a in zip(t.params, args):
            st.frame[pname] = coerce(a, ptype)
            st.types[pname] = ptype
        if entry.guard is not None:
            _, gs, g = self.it.eval_expr(st, entry.guard, env)
            if gs.kind == "E":
                return AugFireResult(pre, state, None, "TRANSITION-EXC1", gs.reason)
            if not g:
                return AugFireResult(pre, state, None, "TRANSITION-GRD")
        path = [entry.label]
        cur = entry.dst
        outs = self.aug.out_edges[cur]
        rev = next((e for e in outs if e.role == "revert"), None)
        if rev is not None:
            go = next(e for e in outs if e.role == "no-revert")
            trial_st = copy.deepcopy(st)
            trial_path = path + [go.label]
            end, kind, value, reason = self.run_path(trial_st, go.dst, env, trial_path)
            if kind == "E":
                return AugFireResult(pre, rev.dst, None, fail, reason, tuple(path + [rev.label]))
            st, path = trial_st, trial_path
        else:
            end, kind, value, reason = self.run_path(st, cur, env, path)
            if kind == "E":
                raise RuntimeError(f"{t.name} raised ({reason}) but has no revert edge")
        if kind == "S":
            # only reachable on hand-edited (mutated) models
            return AugFireResult(pre, end, None, "STUCK", reason, tuple(path))
        verdict = "TRANSITION-FAL" if is_fallback else ("TRANSITION-RET" if kind == "R" else "TRANSITION")
        return AugFireResult(st.ledger, end, value, verdict, "", tuple(path))

    def deploy(self, env: ExternalEnvironment, balances: Optional[dict] = None) -> tuple[LedgerState, str, tuple]:
        led = self.it.fresh_ledger(env, balances)
        r = self.fire(led, self.aug.initial_state, CONSTRUCTOR, (), env)
        if r.verdict not in ("TRANSITION", "TRANSITION-RET"):
            raise DeployError(f"constructor failed: {r.verdict} {r.reason}")
        return r.ledger, r.state, r.path


def run_augmented_trace(aug: AugmentedModel, ctor_env: Optional[ExternalEnvironment],
                        calls: Sequence[CallSpec], balances: Optional[dict] = None) -> Trace:
    ctor_env = ctor_env or ExternalEnvironment()
    rn = AugmentedRunner(aug)
    led, s, _ = rn.deploy(ctor_env.fresh(), balances if balances is not None else initial_balances(calls, ctor_env))
    start = s
    steps = []
    for c in calls:
        n_before = len(led.event_log)
        r = rn.fire(led, s, c.name, c.args, c.env.fresh())
        led, s = r.ledger, r.state
        steps.append(TraceStep(c.name, r.verdict, s, r.value, led.digest(), list(led.event_log[n_before:])))
    return Trace(start, steps, s, led)
