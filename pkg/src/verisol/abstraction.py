"""Finite Kripke structures over augmented models.

Variables that depend on the environment (caller, value, parameters, call
results, container contents) are not tracked; guards over them evaluate to
UNKNOWN and both outcomes are explored.  Variables fed only by constants are
tracked exactly.  Time is a clock that holds the earliest moment the current
configuration can exist:

* a lower-bound guard `now >= e` is always satisfiable by waiting, so the
  guarded edge advances the clock to `max(clock, e)` (`e + 1` for `>`);
* an upper-bound guard `now <= e` holds while `clock <= e`; an extra
  self-loop on the source state moves the clock to `e + 1`.

Each Kripke state remembers the label of the edge that produced it, which
turns transition and statement names into ordinary state atoms.
"""
from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .model import (
    CONSTRUCTOR, FALLBACK, Assign, Binary, Call, ContractModel, Diagnostic, ElemType, Emit, Env,
    Expr, ExprStmt, Index, Literal, Member, Return, Stmt, Unary, VarDecl, VarRef, sub_exprs,
    walk_stmts,
)
from .semantics import Addr, SInt, arith, coerce, wrap_signed, wrap_unsigned
from .transform import AugmentedModel, AugTransition

DOMAIN_CAP = 64
DEFAULT_STATE_CAP = 1_000_000


def state_cap() -> int:
    return int(os.environ.get("VERISOL_STATE_CAP", DEFAULT_STATE_CAP))


class StateCapExceeded(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"Kripke construction exceeded the state cap of {cap}; raise VERISOL_STATE_CAP "
                         f"or abstract more variables")
        self.cap = cap


class UnsupportedTimeGuard(ValueError):
    def __init__(self, diag: Diagnostic):
        super().__init__(diag.message)
        self.diagnostic = diag


class _Unknown:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "?"


UNKNOWN = _Unknown()


# ------------------------------------------------------------- classification

@dataclass
class VariableClass:
    concrete: set = field(default_factory=set)
    abstract: set = field(default_factory=set)
    time: set = field(default_factory=set)

    def kind(self, name: str) -> str:
        if name in self.time:
            return "time"
        if name in self.concrete:
            return "concrete"
        return "abstract"

    def to_json(self) -> dict:
        return {"concrete": sorted(self.concrete), "abstract": sorted(self.abstract), "time": sorted(self.time)}


def _local_key(origin: str, name: str) -> str:
    return f"{origin}.{name}"


def classify_variables(aug: AugmentedModel, forced_abstract: Iterable[str] = ()) -> VariableClass:
    """Storage variables by name, locals as `transition.name`."""
    vtypes = aug.conformed.var_types()
    elementary = {n for n, t in vtypes.items() if isinstance(t, ElemType)}
    locals_: dict[str, set] = {}
    params: dict[str, set] = {}
    for t in aug.conformed.transitions:
        params[t.origin_name] = {n for n, _ in t.params}
        for _, s in walk_stmts(t.action):
            if isinstance(s, VarDecl):
                locals_.setdefault(t.origin_name, set()).add(s.name)
                if isinstance(s.type, ElemType):
                    elementary.add(_local_key(t.origin_name, s.name))

    def resolve(origin: str, name: str) -> Optional[str]:
        if name in locals_.get(origin, ()):
            return _local_key(origin, name)
        if name in params.get(origin, ()):
            return None
        return name if name in vtypes else None

    # (target, origin, rhs) for every assignment-like write
    writes: list[tuple[str, str, Optional[Expr], bool]] = []
    for e in aug.transitions:
        exprs: list[Expr] = []
        if e.guard is not None:
            exprs.append(e.guard)
        match e.action:
            case VarDecl(name=n, init=i):
                writes.append((_local_key(e.origin, n), e.origin, i, False))
                if i is not None:
                    exprs.append(i)
            case ExprStmt(expr=x) | Return(value=x) if x is not None:
                exprs.append(x)
            case Emit(args=args):
                exprs.extend(args)
        for x in exprs:
            for sub in sub_exprs(x):
                if isinstance(sub, Assign):
                    tgt = sub.target
                    if isinstance(tgt, VarRef):
                        k = resolve(e.origin, tgt.name)
                        if k is not None:
                            writes.append((k, e.origin, sub.value, True))
    abstract = set(forced_abstract) | {n for n in vtypes if n not in elementary}
    time = {"creationTime"}

    def tainted(origin: str, rhs: Optional[Expr]) -> tuple[bool, bool]:
        """(depends on environment or abstract data, depends on now)"""
        if rhs is None:
            return False, False
        dirty = uses_now = False
        for x in sub_exprs(rhs):
            match x:
                case Env("now"):
                    uses_now = True
                case Env():
                    dirty = True
                case Index() | Member() | Call():
                    dirty = True
                case VarRef(name):
                    k = resolve(origin, name)
                    if k is None or k in abstract:
                        dirty = True
                    elif k in time:
                        uses_now = True
        return dirty, uses_now

    changed = True
    while changed:
        changed = False
        for k, origin, rhs, _ in writes:
            if k in abstract:
                continue
            dirty, uses_now = tainted(origin, rhs)
            if dirty:
                abstract.add(k)
                time.discard(k)
                changed = True
            elif uses_now and k not in time:
                time.add(k)
                changed = True
    every = set(vtypes) | {_local_key(o, n) for o, ns in locals_.items() for n in ns}
    time &= every - abstract
    concrete = every - abstract - time
    return VariableClass(concrete, abstract & every, time)


# ------------------------------------------------------------ time guards

@dataclass(frozen=True)
class TimeGuard:
    residual: Optional[Expr]                   # remaining conjuncts, evaluated three-valued
    lower: tuple[tuple[Expr, bool], ...] = ()  # (bound, strict)
    upper: tuple[tuple[Expr, bool], ...] = ()


def _conjuncts(e: Optional[Expr]) -> list[Expr]:
    if e is None:
        return []
    if isinstance(e, Binary) and e.op == "&&":
        return _conjuncts(e.lhs) + _conjuncts(e.rhs)
    return [e]


def _is_now(e: Expr) -> bool:
    return isinstance(e, Env) and e.name == "now"


_FLIP = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}


def split_time_guard(guard: Optional[Expr]) -> TimeGuard:
    rest, lower, upper = [], [], []
    for c in _conjuncts(guard):
        if isinstance(c, Binary) and c.op in _FLIP and (_is_now(c.lhs) != _is_now(c.rhs)):
            op, bound = (c.op, c.rhs) if _is_now(c.lhs) else (_FLIP[c.op], c.lhs)
            if op in (">=", ">"):
                lower.append((bound, op == ">"))
            else:
                upper.append((bound, op == "<"))
        else:
            rest.append(c)
    residual = None
    for c in rest:
        residual = c if residual is None else Binary("&&", residual, c)
    return TimeGuard(residual, tuple(lower), tuple(upper))


@dataclass
class TimedModel:
    aug: AugmentedModel
    guards: dict                    # entry label -> TimeGuard
    timeouts: list                  # (label, state, entry label, bound expr, strict)

    def timeout_origin(self, label: int) -> str:
        for lab, _, entry, _, _ in self.timeouts:
            if lab == label:
                return f"{self.aug.edge(entry).origin}.<timeout>"
        raise KeyError(label)


def rewrite_time_guards(aug: AugmentedModel) -> TimedModel:
    guards, timeouts = {}, []
    nxt = len(aug.transitions) + 1
    for e in aug.transitions:
        if e.role != "guard-entry" or e.guard is None:
            continue
        tg = split_time_guard(e.guard)
        if tg.lower and tg.upper:
            raise UnsupportedTimeGuard(Diagnostic(
                "unsupported-time-guard",
                f"guard of {e.origin} bounds `now` from both sides", e.guard.span))
        guards[e.label] = tg
        for bound, strict in tg.upper:
            timeouts.append((nxt, e.src, e.label, bound, strict))
            nxt += 1
    return TimedModel(aug, guards, timeouts)


# ---------------------------------------------------- three-valued evaluation

class _Demote(Exception):
    def __init__(self, name: str):
        self.name = name


class AbstractEval:
    def __init__(self, classes: VariableClass, origin: str, vals: dict, locs: dict, clock: int,
                 types: Optional[dict] = None):
        self.c = classes
        self.types = types or {}
        self.origin = origin
        self.vals = vals
        self.locs = locs
        self.clock = clock

    def key(self, name: str) -> Optional[str]:
        lk = _local_key(self.origin, name)
        if lk in self.c.concrete or lk in self.c.time or lk in self.c.abstract:
            return lk
        return name

    def read(self, name: str) -> Any:
        k = self.key(name)
        if k in self.locs:
            return self.locs[k]
        if k in self.vals:
            return self.vals[k]
        return UNKNOWN

    def ev(self, e: Expr, time_rhs: bool = False) -> Any:
        match e:
            case Literal(value=v):
                return v
            case Env("now"):
                return self.clock if time_rhs else UNKNOWN
            case Env():
                return UNKNOWN
            case VarRef(name):
                return self.read(name)
            case Unary(op, x):
                v = self.ev(x, time_rhs)
                if v is UNKNOWN:
                    return UNKNOWN
                if op == "!":
                    return not v
                if op == "-":
                    return wrap_signed(-v) if isinstance(v, SInt) else wrap_unsigned(-v)
                return v
            case Binary("&&", l, r):
                a = self.ev(l, time_rhs)
                if a is False:
                    return False
                b = self.ev(r, time_rhs)
                if b is False:
                    return False
                return True if a is True and b is True else UNKNOWN
            case Binary("||", l, r):
                a = self.ev(l, time_rhs)
                if a is True:
                    return True
                b = self.ev(r, time_rhs)
                if b is True:
                    return True
                return False if a is False and b is False else UNKNOWN
            case Binary(op, l, r):
                a, b = self.ev(l, time_rhs), self.ev(r, time_rhs)
                if a is UNKNOWN or b is UNKNOWN:
                    return UNKNOWN
                try:
                    return arith(op, a, b)
                except Exception:
                    return UNKNOWN          # abstract evaluation never raises
            case Assign(target, op, value):
                v = self.ev(value, time_rhs=True)
                if isinstance(target, VarRef):
                    k = self.key(target.name)
                    tracked = k in self.c.concrete or k in self.c.time
                    if tracked:
                        if op != "=":
                            old = self.read(target.name)
                            v = UNKNOWN if old is UNKNOWN or v is UNKNOWN else _safe(op[0], old, v)
                        if v is UNKNOWN:
                            raise _Demote(k)
                        v = coerce(v, self.type_of(k))
                        (self.locs if k in self.locs else self.vals)[k] = v
                        return v
                else:
                    self.ev(target)
                return UNKNOWN
            case Member(base, _):
                self.ev(base)
                return UNKNOWN
            case Index(base, idx):
                self.ev(base)
                self.ev(idx)
                return UNKNOWN
            case Call(target=t, args=args):
                if t is not None:
                    self.ev(t)
                for a in args:
                    self.ev(a)
                return UNKNOWN
        return UNKNOWN

    def type_of(self, k: str):
        return self.types.get(k)


def _safe(op, a, b):
    try:
        return arith(op, a, b)
    except Exception:
        return UNKNOWN


# ------------------------------------------------------------------- Kripke

@dataclass(frozen=True)
class KState:
    control: str
    vals: tuple
    locs: tuple
    clock: int
    last: Optional[str]


@dataclass
class Kripke:
    states: list
    succ: list                      # per state: list of (label, dst)
    initial: list
    atoms: list                     # per state: frozenset of atom names
    deadlocks: set
    kind: str = "augmented"
    classes: Optional[VariableClass] = None
    demoted: tuple = ()
    legend: dict = field(default_factory=dict)   # label -> description

    def __len__(self):
        return len(self.states)

    @property
    def n_edges(self) -> int:
        return sum(len(s) for s in self.succ)

    def total_succ(self, i: int) -> list:
        """Successors with stuttering on states that have none."""
        return self.succ[i] or [(None, i)]

    def describe(self, i: int) -> str:
        s = self.states[i]
        vals = ", ".join(f"{k}={_show(v)}" for k, v in s.vals if k != "creationTime")
        parts = [s.control]
        if vals:
            parts.append(vals)
        parts.append(f"clock={s.clock}")
        return " ".join(parts)

    def to_json(self) -> dict:
        return {"kind": self.kind,
                "states": [{"id": i, "control": s.control, "vals": {k: _show(v) for k, v in s.vals},
                            "clock": s.clock, "last": s.last, "atoms": sorted(self.atoms[i])}
                           for i, s in enumerate(self.states)],
                "initial": self.initial,
                "edges": [[i, lab, j] for i, outs in enumerate(self.succ) for lab, j in outs],
                "deadlocks": sorted(self.deadlocks),
                "variables": self.classes.to_json() if self.classes else {},
                "demoted": list(self.demoted)}


def _show(v):
    if isinstance(v, bytes):
        return "0x" + v.hex()
    if isinstance(v, Addr):
        return hex(v)
    return v


def build_kripke(aug: AugmentedModel, cap: Optional[int] = None,
                 forced_abstract: Iterable[str] = ()) -> Kripke:
    """Reachable abstract states of the augmented model; see module docstring."""
    cap = cap or state_cap()
    timed = rewrite_time_guards(aug)
    forced = set(forced_abstract)
    while True:
        classes = classify_variables(aug, forced)
        try:
            k = _explore(timed, classes, cap)
            k.demoted = tuple(sorted(forced - set(forced_abstract)))
            return k
        except _Demote as d:
            forced.add(d.name)


def _types(aug: AugmentedModel) -> dict:
    out = dict(aug.conformed.var_types())
    for t in aug.conformed.transitions:
        for _, s in walk_stmts(t.action):
            if isinstance(s, VarDecl):
                out[_local_key(t.origin_name, s.name)] = s.type
    return out


def _explore(timed: TimedModel, classes: VariableClass, cap: int) -> Kripke:
    aug = timed.aug
    stable = set(aug.stable_states)
    finals = set(aug.final_states)
    types = _types(aug)
    from .semantics import zero_value
    structs = aug.conformed.structs()
    init_vals = {n: zero_value(types[n], structs) for n in sorted(classes.concrete | classes.time) if "." not in n}
    init_vals["creationTime"] = 0
    start = KState(aug.initial_state, tuple(sorted(init_vals.items())), (), 0, None)
    states, index, succ = [start], {start: 0}, [[]]
    seen_vals: dict[str, set] = {}
    timeouts_at: dict[str, list] = {}
    for lab, s, entry, bound, strict in timed.timeouts:
        timeouts_at.setdefault(s, []).append((lab, entry, bound, strict))
    queue = deque([0])

    def add(ks: KState) -> int:
        i = index.get(ks)
        if i is None:
            if len(states) >= cap:
                raise StateCapExceeded(cap)
            for k, v in ks.vals + ks.locs:
                bucket = seen_vals.setdefault(k, set())
                bucket.add(v)
                if len(bucket) > DOMAIN_CAP and k not in classes.time:
                    raise _Demote(k)
            i = len(states)
            states.append(ks)
            index[ks] = i
            succ.append([])
            queue.append(i)
        return i

    while queue:
        i = queue.popleft()
        ks = states[i]
        vals, locs = dict(ks.vals), dict(ks.locs)
        for e in aug.out_edges[ks.control]:
            for nxt in _fire(timed, classes, e, vals, locs, ks.clock, types):
                nvals, nlocs, nclock = nxt
                if e.dst in stable:
                    nlocs = {}
                ns = KState(e.dst, tuple(sorted(nvals.items())), tuple(sorted(nlocs.items())), nclock, str(e.label))
                succ[i].append((str(e.label), add(ns)))
        if ks.control in stable:
            for lab, entry, bound, strict in timeouts_at.get(ks.control, ()):
                ae = AbstractEval(classes, aug.edge(entry).origin, vals, locs, ks.clock, types)
                b = ae.ev(bound, time_rhs=True)
                if b is UNKNOWN:
                    continue          # the guard stays abstract; nothing to invalidate
                limit = b - 1 if strict else b
                if ks.clock <= limit:
                    ns = KState(ks.control, ks.vals, (), limit + 1, str(lab))
                    succ[i].append((str(lab), add(ns)))

    atoms = []
    dead = set()
    for i, s in enumerate(states):
        a = {s.last} if s.last is not None else set()
        if not succ[i] and s.control not in finals:
            a.add("deadlock")
            dead.add(i)
        atoms.append(frozenset(a))
    legend = {str(e.label): f"{e.origin} {e.role}: {e.describe()}" for e in aug.transitions}
    for lab, s, entry, bound, strict in timed.timeouts:
        legend[str(lab)] = f"{aug.edge(entry).origin} timeout at {s}"
    return Kripke(states, succ, [0], atoms, dead, "augmented", classes, (), legend)


def _fire(timed: TimedModel, classes: VariableClass, e: AugTransition, vals: dict, locs: dict,
          clock: int, types: dict) -> list[tuple[dict, dict, int]]:
    """Abstract successors (none or one) of taking edge e."""
    vals, locs = dict(vals), dict(locs)
    ae = AbstractEval(classes, e.origin, vals, locs, clock, types)
    if e.role == "guard-entry":
        locs.clear()
        ae.locs = locs
        tg = timed.guards.get(e.label)
        if tg is not None:
            for bound, strict in tg.upper:
                b = ae.ev(bound, time_rhs=True)
                if b is not UNKNOWN and not (clock < b if strict else clock <= b):
                    return []
            for bound, strict in tg.lower:
                b = ae.ev(bound, time_rhs=True)
                if b is not UNKNOWN:
                    clock = max(clock, b + 1 if strict else b)
            g = ae.ev(tg.residual) if tg.residual is not None else True
        else:
            g = ae.ev(e.guard) if e.guard is not None else True
        return [] if g is False else [(vals, locs, clock)]
    if e.role in ("revert", "no-revert"):
        return [(vals, locs if e.role == "no-revert" else {}, clock)]
    if e.guard is not None and ae.ev(e.guard) is False:
        return []
    match e.action:
        case VarDecl(name=n, init=i):
            k = _local_key(e.origin, n)
            v = ae.ev(i, time_rhs=True) if i is not None else _zero(ae.type_of(k))
            if k in classes.concrete or k in classes.time:
                if v is UNKNOWN:
                    raise _Demote(k)
                locs[k] = coerce(v, ae.type_of(k))
        case ExprStmt(expr=x):
            ae.ev(x)
        case Emit(args=args):
            for a in args:
                ae.ev(a)
        case Return(value=v) if v is not None:
            ae.ev(v)
    return [(vals, locs, clock)]


def _zero(t):
    from .semantics import zero_value
    return zero_value(t, {}) if isinstance(t, ElemType) else UNKNOWN


# ------------------------------------------------------ initial-model view

def initial_view(k: Kripke, aug: AugmentedModel) -> Kripke:
    """Contract internal paths between stable states into one edge per call.

    Edges are named by the transition they complete; revert paths are dropped
    since a reverted call leaves the contract where it was.
    """
    stable = set(aug.stable_states)
    finals = set(aug.final_states)
    label_origin = {str(e.label): e.origin for e in aug.transitions}
    reverts = {str(e.label) for e in aug.transitions if e.role == "revert"}
    timeouts = set()
    for lab, s, entry, _, _ in rewrite_time_guards(aug).timeouts:
        label_origin[str(lab)] = f"{aug.edge(entry).origin}.<timeout>"
        timeouts.add(str(lab))

    def is_stable(i):
        return k.states[i].control in stable

    def project(i: int, name: Optional[str]) -> KState:
        s = k.states[i]
        return KState(s.control, s.vals, (), s.clock, name)

    start = project(k.initial[0], None)
    states, index, succ = [start], {start: 0}, [[]]
    origin_of = {0: k.initial[0]}     # view state -> some Kripke state with the same data
    queue = deque([0])
    while queue:
        v = queue.popleft()
        ki = origin_of[v]
        ends = set()
        for lab, j in k.succ[ki]:
            if lab in timeouts:
                ends.add((label_origin[lab], j))
                continue
            # walk the internal region entered by this edge
            seen = {j}
            stack = [j]
            name = label_origin[lab]
            while stack:
                x = stack.pop()
                if is_stable(x):
                    continue
                for lab2, y in k.succ[x]:
                    if lab2 in reverts:
                        continue
                    if is_stable(y):
                        ends.add((name, y))
                    elif y not in seen:
                        seen.add(y)
                        stack.append(y)
        outs = []
        for name, y in sorted(ends, key=lambda t: (t[0], t[1])):
            ps = project(y, name)
            w = index.get(ps)
            if w is None:
                w = len(states)
                states.append(ps)
                index[ps] = w
                succ.append([])
                origin_of[w] = y
                queue.append(w)
            if (name, w) not in outs:
                outs.append((name, w))
        succ[v] = outs
    atoms, dead = [], set()
    for i, s in enumerate(states):
        a = {s.last} if s.last is not None else set()
        if not succ[i] and s.control not in finals:
            a.add("deadlock")
            dead.add(i)
        atoms.append(frozenset(a))
    legend = {n: n for n in sorted({o for o in label_origin.values()})}
    return Kripke(states, succ, [0], atoms, dead, "initial", k.classes, k.demoted, legend)


# ------------------------------------------------------------ trace embedding

def embed_trace(k: Kripke, aug: AugmentedModel, ctor_env, calls) -> Optional[str]:
    """Replay a concrete call sequence and follow its edge labels through `k`.

    Returns None when the run is a path of the Kripke structure whose tracked
    variables agree with the concrete storage after every call, otherwise a
    short description of the first step that falls off.  Calls rejected
    before any edge is taken leave both sides unchanged.  Timeout self-loops
    may be interleaved freely, since the clock only bounds time from below.
    """
    from .semantics import ExternalEnvironment, canon, initial_balances
    from .transform import AugmentedRunner

    ctor_env = (ctor_env or ExternalEnvironment(now=0)).fresh()
    n_aug = len(aug.transitions)
    tracked = sorted(n for n in k.classes.concrete if "." not in n) if k.classes else []

    def timeout_closure(cur: set) -> set:
        out, stack = set(cur), list(cur)
        while stack:
            i = stack.pop()
            for lab, j in k.succ[i]:
                if int(lab) > n_aug and j not in out:
                    out.add(j)
                    stack.append(j)
        return out

    def follow(cur: set, path) -> set:
        for lab in path:
            cur = {j for i in timeout_closure(cur) for l2, j in k.succ[i] if l2 == str(lab)}
            if not cur:
                return cur
        return cur

    def agrees(i: int, led) -> bool:
        vals = dict(k.states[i].vals)
        return all(canon(led.storage[n]) == canon(vals[n]) for n in tracked if n in vals)

    rn = AugmentedRunner(aug)
    led, s, path = rn.deploy(ctor_env, initial_balances(calls, ctor_env))
    cur = {i for i in follow(set(k.initial), path) if agrees(i, led)}
    if not cur:
        return "constructor does not embed"
    for n, c in enumerate(calls):
        r = rn.fire(led, s, c.name, c.args, c.env.fresh())
        if not r.path:
            continue
        nxt = follow(cur, r.path)
        if not nxt:
            return f"step {n} ({c.name}): path {list(r.path)} has no abstract counterpart"
        led, s = r.ledger, r.state
        cur = {i for i in nxt if agrees(i, led)}
        if not cur:
            return f"step {n} ({c.name}): tracked variables disagree"
    return None
