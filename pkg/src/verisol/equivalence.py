"""Finite weak-bisimulation check between a model and its augmentation.

Both systems are unfolded over a finite call alphabet (function, arguments,
environment) up to a call-depth bound.  A stable configuration offers one
observable `call k` edge per alphabet entry.  The initial model then answers
with one observable edge; the augmented model walks internal (tau) edges and
the final edge of the path is observable.  Observable labels carry the
function, outcome and a digest of the resulting ledger, so two related
configurations must agree on every ledger effect.
"""
from __future__ import annotations

import copy
import itertools
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Sequence

from . import abstraction
from .model import CONSTRUCTOR, FALLBACK, ArrayType, ContractModel, ElemType, MappingType, NamedType, SolType, format_type
from .semantics import (
    N, Addr, ArrV, CallSpec, DeployError, ExecutionState, ExternalEnvironment, Interpreter, canon,
    coerce, hash_builtin, initial_balances, run_trace, to_json_value,
)
from .transform import AugmentedModel, AugmentedRunner, augment_model, run_augmented_trace

TAU = "tau"
DEFAULT_STATE_CAP = 200_000


class StateCapExceeded(abstraction.StateCapExceeded):
    def __init__(self, cap: int):
        RuntimeError.__init__(self, f"LTS construction exceeded {cap} configurations; shrink the domains or max_calls")
        self.cap = cap


# ------------------------------------------------------------------ domains

@dataclass
class Domain:
    """Finite choices for everything the environment controls."""
    senders: tuple = (1, 2)
    values: tuple = (0, 1)
    times: tuple = (0,)
    call_results: tuple = ((),)
    params: dict = field(default_factory=dict)   # type text -> tuple of values
    max_calls: int = 3
    functions: Optional[tuple] = None            # restrict the alphabet
    ctor_env: ExternalEnvironment = field(default_factory=lambda: ExternalEnvironment(sender=1, now=0))

    def values_for(self, t: SolType) -> list:
        key = format_type(t)
        if key in self.params:
            return [_materialize(v, t) for v in self.params[key]]
        match t:
            case ElemType("bool"):
                return [False, True]
            case ElemType("address"):
                return [Addr(s) for s in self.senders]
            case ElemType(n) if n.startswith(("uint", "int")):
                return [0, 1]
            case ElemType(n) if n.startswith("bytes"):
                return [bytes(32)]
            case ArrayType(e, _):
                return [ArrV(e, [])] + [ArrV(e, [v]) for v in self.values_for(e)[:1]]
        return [None]

    @classmethod
    def from_json(cls, d: dict) -> "Domain":
        kw = dict(d)
        for k in ("senders", "values", "times"):
            if k in kw:
                kw[k] = tuple(kw[k])
        if "call_results" in kw:
            kw["call_results"] = tuple(tuple(x) for x in kw["call_results"])
        if "functions" in kw and kw["functions"] is not None:
            kw["functions"] = tuple(kw["functions"])
        if "ctor_env" in kw:
            kw["ctor_env"] = ExternalEnvironment.from_json(kw["ctor_env"])
        return cls(**kw)


def _materialize(v: Any, t: SolType) -> Any:
    """Domain values in JSON form: hex strings for bytes, lists for arrays, {"hash": [...]} for digests."""
    match t:
        case ArrayType(e, _):
            return ArrV(e, [_materialize(x, e) for x in v])
        case ElemType(n) if n.startswith("bytes") and n != "bytes":
            if isinstance(v, dict) and "hash" in v:
                return hash_builtin([_materialize_any(x) for x in v["hash"]])
            if isinstance(v, str):
                return bytes.fromhex(v.removeprefix("0x")).rjust(32, b"\0")
            return coerce(v, t)
        case ElemType("address"):
            return Addr(v)
    return coerce(v, t)


def _materialize_any(x):
    if isinstance(x, str) and x.startswith("0x"):
        return bytes.fromhex(x[2:]).rjust(32, b"\0")
    return x


def call_alphabet(model: ContractModel, dom: Domain) -> list[CallSpec]:
    out = []
    names = [(t.name, t.params, t.payable) for t in model.transitions]
    if model.fallback_action is not None:
        names.append((FALLBACK, (), True))
    for name, params, payable in names:
        if dom.functions is not None and name not in dom.functions:
            continue
        arg_sets = itertools.product(*[dom.values_for(pt) for _, pt in params])
        for args in arg_sets:
            for sender, value, now, cr in itertools.product(
                    dom.senders, dom.values if payable else (0,), dom.times, dom.call_results):
                out.append(CallSpec(name, tuple(args), ExternalEnvironment(sender, value, now, None, tuple(cr))))
    return out


def random_calls(model: ContractModel, dom: Domain, rng: random.Random, n: int) -> list[CallSpec]:
    """Random call sequence with non-decreasing time drawn from the domain."""
    alphabet = call_alphabet(model, replace(dom, times=(0,)))
    times = sorted(dom.times)
    now = times[0]
    out = []
    for _ in range(n):
        c = rng.choice(alphabet)
        now = max(now, rng.choice(times))
        out.append(CallSpec(c.name, c.args, replace(c.env, now=now)))
    return out


# ---------------------------------------------------------------------- LTS

@dataclass
class LTS:
    initial: Any
    edges: dict            # config -> list[(label, config)]
    kind: str = ""

    def __len__(self):
        return len(self.edges)

    def labels(self) -> set:
        return {a for outs in self.edges.values() for a, _ in outs}


def _key(st: ExecutionState, *extra) -> tuple:
    led = st.ledger
    frame = tuple(sorted((k, canon(v)) for k, v in st.frame.items()))
    return extra + (led.key(), led.now, led.block_number, frame)


def _outcome(verdict: str, value: Any) -> str:
    if verdict in ("TRANSITION", "TRANSITION-FAL"):
        return "ok"
    if verdict == "TRANSITION-RET":
        return f"ret:{to_json_value(value)!r}"
    if verdict in ("TRANSITION-EXC2", "TRANSITION-EXC3"):
        return "revert"
    return "reject"


def _origin(model_names: set, name: str) -> str:
    return name if name in model_names else FALLBACK


class _Explorer:
    def __init__(self, cap: int):
        self.cap = cap
        self.edges: dict = {}
        self.store: dict = {}
        self.todo: deque = deque()

    def visit(self, key, payload):
        if key not in self.edges:
            if len(self.edges) >= self.cap:
                raise StateCapExceeded(self.cap)
            self.edges[key] = []
            self.store[key] = payload
            self.todo.append(key)
        return key


def build_lts_initial(model: ContractModel, dom: Domain, cap: int = DEFAULT_STATE_CAP) -> LTS:
    it = Interpreter(model)
    alphabet = call_alphabet(model, dom)
    balances = initial_balances(alphabet, dom.ctor_env)
    ex = _Explorer(cap)
    root = ("undeployed",)
    ex.visit(root, None)
    while ex.todo:
        k = ex.todo.popleft()
        p = ex.store[k]
        if k[0] == "undeployed":
            try:
                led, s = it.deploy(dom.ctor_env.fresh(), balances)
                st = ExecutionState(led)
                nk = ex.visit(_key(st, "idle", s, 0), (st, s, 0))
                ex.edges[k].append(((CONSTRUCTOR, "ok", led.digest()), nk))
            except DeployError:
                pass
            continue
        if k[0] == "idle":
            st, s, d = p
            if d >= dom.max_calls:
                continue
            for i, c in enumerate(alphabet):
                nk = ex.visit(("pend",) + k[1:] + (i,), (st, s, d, c))
                ex.edges[k].append((("call", i), nk))
            continue
        st, s, d, c = p
        led = copy.deepcopy(st.ledger)
        r = it.fire(led, s, c.name, c.args, c.env.fresh())
        nst = ExecutionState(r.ledger)
        nk = ex.visit(_key(nst, "idle", r.state, d + 1), (nst, r.state, d + 1))
        label = (_origin({t.name for t in model.transitions}, c.name), _outcome(r.verdict, r.value), r.ledger.digest())
        ex.edges[k].append((label, nk))
    return LTS(root, ex.edges, "initial")


def build_lts_augmented(aug: AugmentedModel, dom: Domain, cap: int = DEFAULT_STATE_CAP) -> LTS:
    rn = AugmentedRunner(aug)
    it = rn.it
    model = aug.original
    alphabet = call_alphabet(model, dom)
    balances = initial_balances(alphabet, dom.ctor_env)
    declared = {t.name for t in model.transitions}
    stable = set(aug.stable_states)
    ex = _Explorer(cap)

    def start(st, s, d, name, args, env):
        """Pending call at stable state s: entry edge or rejection."""
        origin = _origin(declared, name) if name != CONSTRUCTOR else CONSTRUCTOR
        entries = rn.entry_edges(s, origin)
        pre = st.ledger
        if not entries:
            verdict = "TRANSITION-EXC3" if origin == FALLBACK else "TRANSITION-WRO"
            return [((origin, _outcome(verdict, None), pre.digest()), "idle", (st, s, d + 1))]
        e = entries[0]
        t = aug.source_transition(e.transition)
        fail = "TRANSITION-EXC3" if origin == FALLBACK else "TRANSITION-EXC2"
        if len(args) != len(t.params):
            return [((origin, "reject", pre.digest()), "idle", (st, s, d + 1))]
        nst = copy.deepcopy(st)
        if env.now is not None:
            nst.ledger.now = env.now
        if env.block_number is not None:
            nst.ledger.block_number = env.block_number
        rejected = copy.deepcopy(nst)
        if (env.value and not t.payable) or not it.move_value(nst.ledger, env):
            return [((origin, _outcome(fail, None), rejected.ledger.digest()), "idle", (rejected, s, d + 1))]
        for (pn, pt), a in zip(t.params, args):
            nst.frame[pn] = coerce(a, pt)
            nst.types[pn] = pt
        if e.guard is not None:
            _, gs, g = it.eval_expr(nst, e.guard, env)
            if gs.kind == "E" or not g:
                return [((origin, "reject", rejected.ledger.digest()), "idle", (rejected, s, d + 1))]
        return [(TAU, "run", (nst, e.dst, d, origin, env, rejected.ledger, s))]

    def step(p):
        """One internal edge from a running configuration."""
        st, cur, d, origin, env, pre, src = p
        outs = aug.out_edges[cur]
        rev = next((e for e in outs if e.role == "revert"), None)
        if rev is not None:
            go = next(e for e in outs if e.role == "no-revert")
            trial = copy.deepcopy(st)
            _, kind, _, _ = rn.run_path(trial, go.dst, copy.copy(env), [])
            if kind == "E":
                outcome = _outcome("TRANSITION-EXC3" if origin == FALLBACK else "TRANSITION-EXC2", None)
                st0 = ExecutionState(copy.deepcopy(pre))
                return [((origin, outcome, pre.digest()), "idle", (st0, rev.dst, d + 1))]
            return [(TAU, "run", (st, go.dst, d, origin, env, pre, src))]
        res = []
        for e in outs:
            nst = copy.deepcopy(st)
            env = copy.copy(p[4])    # call results are consumed per branch
            if e.guard is not None:
                _, gs, g = it.eval_expr(nst, e.guard, env)
                if gs.kind == "E":
                    raise RuntimeError(f"branch guard raised at {cur}: {gs.reason}")
                if not g:
                    continue
            nst, status = it.exec(nst, N, e.action, env)
            if status.kind == "E":
                raise RuntimeError(f"edge {e.label} raised without a revert branch: {status.reason}")
            if e.dst in stable:
                # return edges always lead to the transition's destination, a stable state
                verdict = "TRANSITION-FAL" if origin == FALLBACK else (
                    "TRANSITION-RET" if status.kind == "R" else "TRANSITION")
                fin = ExecutionState(nst.ledger)
                res.append(((origin, _outcome(verdict, status.value), nst.ledger.digest()), "idle", (fin, e.dst, d + 1)))
            else:
                res.append((TAU, "run", (nst, e.dst, d, origin, env, pre, src)))
        return res

    def key_of(kind, p):
        if kind == "idle":
            st, s, d = p
            return _key(st, "idle", s, d)
        st, cur, d, origin, env, pre, src = p
        return _key(st, "run", cur, d, origin, repr(env.to_json()), env._cursor, pre.key(), src)

    root = ("undeployed",)
    ex.visit(root, None)
    while ex.todo:
        k = ex.todo.popleft()
        p = ex.store[k]
        if k[0] == "undeployed":
            led = it.fresh_ledger(dom.ctor_env, balances)
            for label, kind, q in start(ExecutionState(led), aug.initial_state, -1, CONSTRUCTOR, (), dom.ctor_env.fresh()):
                ex.edges[k].append((label, ex.visit(key_of(kind, q), q)))
            continue
        if k[0] == "idle":
            st, s, d = p
            if d >= dom.max_calls:
                continue
            for i, c in enumerate(alphabet):
                ex.edges[k].append((("call", i), ex.visit(("pend",) + k[1:] + (i,), (st, s, d, c))))
            continue
        if k[0] == "pend":
            st, s, d, c = p
            for label, kind, q in start(st, s, d, c.name, c.args, c.env.fresh()):
                ex.edges[k].append((label, ex.visit(key_of(kind, q), q)))
            continue
        for label, kind, q in step(p):
            ex.edges[k].append((label, ex.visit(key_of(kind, q), q)))
    return LTS(root, ex.edges, "augmented")


def build_lts(model, dom: Domain, cap: int = DEFAULT_STATE_CAP) -> LTS:
    if isinstance(model, AugmentedModel):
        return build_lts_augmented(model, dom, cap)
    return build_lts_initial(model, dom, cap)


# ----------------------------------------------------------- weak bisimulation

def _closure(lts: LTS) -> dict:
    """tau* successors of every configuration (including itself)."""
    out = {}
    for s in lts.edges:
        seen = {s}
        stack = [s]
        while stack:
            x = stack.pop()
            for a, y in lts.edges[x]:
                if a == TAU and y not in seen:
                    seen.add(y)
                    stack.append(y)
        out[s] = seen
    return out


def _weak(lts: LTS, clo: dict) -> dict:
    """Weak moves: label -> set of targets via tau* a tau*; tau maps to tau*."""
    out = {}
    for s in lts.edges:
        moves: dict = {TAU: set(clo[s])}
        for x in clo[s]:
            for a, y in lts.edges[x]:
                if a != TAU:
                    moves.setdefault(a, set()).update(clo[y])
        out[s] = moves
    return out


@dataclass
class BisimResult:
    related: bool
    relation: set
    witness: Optional[list] = None     # label trace leading to a distinguishing pair
    reason: str = ""
    sizes: tuple = (0, 0)


def check_weak_bisim(a: LTS, b: LTS) -> BisimResult:
    """Greatest weak bisimulation over pairs reachable from the initial pair."""
    clo_a, clo_b = _closure(a), _closure(b)
    wa, wb = _weak(a, clo_a), _weak(b, clo_b)

    def moves(lts, s):
        return lts.edges[s]

    # candidate pairs: everything reachable by matching strong moves against weak answers
    init = (a.initial, b.initial)
    parent = {init: None}
    cand = {init}
    queue = deque([init])
    while queue:
        p, q = queue.popleft()
        succ = []
        for lab, p2 in moves(a, p):
            for q2 in wb[q].get(lab, ()):
                succ.append(((p2, q2), lab))
        for lab, q2 in moves(b, q):
            for p2 in wa[p].get(lab, ()):
                succ.append(((p2, q2), lab))
        for pair, lab in succ:
            if pair not in cand:
                cand.add(pair)
                parent[pair] = ((p, q), lab)
                queue.append(pair)

    rel = set(cand)
    reasons = {}

    def ok(pair) -> bool:
        p, q = pair
        for lab, p2 in moves(a, p):
            if not any((p2, q2) in rel for q2 in wb[q].get(lab, ())):
                reasons.setdefault(pair, ("left", lab))
                return False
        for lab, q2 in moves(b, q):
            if not any((p2, q2) in rel for p2 in wa[p].get(lab, ())):
                reasons.setdefault(pair, ("right", lab))
                return False
        return True

    changed = True
    while changed:
        changed = False
        for pair in list(rel):
            if not ok(pair):
                rel.discard(pair)
                changed = True
    if init in rel:
        return BisimResult(True, rel, sizes=(len(a), len(b)))
    # a shortest path to a pair that fails for a label with no answer at all
    direct = [x for x in cand if x in reasons and not _has_label(x, reasons[x], wa, wb)]
    target = None
    if direct:
        order = _bfs_order(init, cand, parent)
        target = min(direct, key=lambda x: order.get(x, 1 << 30))
    else:
        target = init
    trace = []
    x = target
    while parent.get(x):
        x, lab = parent[x]
        trace.append(lab)
    trace.reverse()
    side, lab = reasons.get(target, ("?", None))
    who = "initial" if side == "left" else "augmented"
    trace.append(lab)
    return BisimResult(False, rel, trace, f"{who} model can perform {lab!r} with no matching answer",
                       (len(a), len(b)))


def _has_label(pair, reason, wa, wb) -> bool:
    side, lab = reason
    p, q = pair
    return bool((wb[q] if side == "left" else wa[p]).get(lab))


def _bfs_order(init, cand, parent) -> dict:
    depth = {}
    for x in cand:
        d, y = 0, x
        while parent.get(y):
            y = parent[y][0]
            d += 1
        depth[x] = d
    return depth


def delete_edge(aug: AugmentedModel, label: int) -> AugmentedModel:
    """Mutant: the augmented model with one edge removed (other labels unchanged)."""
    edges = tuple(e for e in aug.transitions if e.label != label)
    m = AugmentedModel(aug.name, aug.states, aug.initial_state, aug.final_states, aug.stable_states,
                       edges, aug.conformed, aug.original, dict(aug.aliases))
    return m


def describe_label(lab, alphabet: Sequence[CallSpec]) -> str:
    if isinstance(lab, tuple) and lab and lab[0] == "call":
        c = alphabet[lab[1]]
        args = ", ".join(repr(to_json_value(a)) for a in c.args)
        return f"call {c.name}({args}) sender={c.env.sender} value={c.env.value} now={c.env.now}"
    if lab == TAU:
        return "tau"
    if isinstance(lab, tuple):
        return f"{lab[0]} -> {lab[1]} [ledger {lab[2]}]"
    return repr(lab)


def check_model(model: ContractModel, dom: Domain, aug: Optional[AugmentedModel] = None,
                cap: int = DEFAULT_STATE_CAP) -> BisimResult:
    aug = aug or augment_model(model)
    return check_weak_bisim(build_lts_initial(model, dom, cap), build_lts_augmented(aug, dom, cap))


def compare_traces(model: ContractModel, aug: AugmentedModel, calls: Sequence[CallSpec],
                   ctor_env: Optional[ExternalEnvironment] = None) -> Optional[str]:
    """Run one call sequence on both models; None when every step agrees."""
    ta = run_trace(model, ctor_env, calls)
    tb = run_augmented_trace(aug, ctor_env, calls)
    for i, (x, y) in enumerate(zip(ta.steps, tb.steps)):
        if (x.verdict, x.state, x.digest) != (y.verdict, y.state, y.digest) or canon(x.value) != canon(y.value):
            return f"step {i} ({x.call}): initial {x.verdict}/{x.state}/{x.digest} vs augmented {y.verdict}/{y.state}/{y.digest}"
    if ta.ledger.key() != tb.ledger.key():
        return "final ledgers differ"
    return None


def calls_from_json(model: ContractModel, items: Sequence[dict]) -> list[CallSpec]:
    """Calls written as {"name", "args", "env"}; arguments use the domain JSON encodings."""
    out = []
    for d in items:
        t = model.transition(d["name"])
        raw = list(d.get("args", ()))
        if t is not None and len(raw) == len(t.params):
            args = tuple(_materialize(v, pt) for v, (_, pt) in zip(raw, t.params))
        else:
            args = tuple(raw)      # arity errors are reported by the interpreter
        out.append(CallSpec(d["name"], args, ExternalEnvironment.from_json(d.get("env", {}))))
    return out
