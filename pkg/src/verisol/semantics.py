"""Concrete small-step interpreter for contract models.

Transition rules (TRANSITION, -RET, -WRO, -GRD, -EXC1, -EXC2, -EXC3, -FAL)
live in `Interpreter.fire`; statement rules in `Interpreter.exec`.

Integers are 64 bits wide with wrapping arithmetic.  External effects
(caller, value, time, success of transfer/send/call) come from an
`ExternalEnvironment`, so runs are deterministic given the environment.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .model import (
    CONSTRUCTOR, FALLBACK, ArrayType, Assign, Binary, Call, Compound, ContractModel, ElemType,
    Emit, Env, Expr, ExprStmt, For, If, Index, Literal, MappingType, Member, NamedType, Return,
    SolType, Stmt, Unary, VarDecl, VarRef, While,
)

WIDTH = 64
MASK = (1 << WIDTH) - 1
MAX_LOOP_STEPS = 10_000


# ------------------------------------------------------------------- values

class Addr(int):
    def __repr__(self):
        return f"Addr({int(self):#x})"


class SInt(int):
    """Signed 64-bit integer; plain ints are unsigned."""


THIS = Addr(0xC0DE)


def wrap_unsigned(v: int) -> int:
    return v & MASK


def wrap_signed(v: int) -> SInt:
    v &= MASK
    return SInt(v - (1 << WIDTH) if v >> (WIDTH - 1) else v)


class MapV:
    def __init__(self, vtype: SolType, structs: dict):
        self.vtype = vtype
        self.structs = structs
        self.data: dict = {}

    def get(self, key):
        if key in self.data:
            return self.data[key]
        z = zero_value(self.vtype, self.structs)
        if isinstance(z, (MapV, ArrV, StructV)):
            self.data[key] = z          # storage reference types persist on access
        return z

    def set(self, key, value):
        self.data[key] = value

    def __deepcopy__(self, memo):
        m = MapV(self.vtype, self.structs)
        m.data = copy.deepcopy(self.data, memo)
        return m


class ArrV(list):
    def __init__(self, etype: SolType, items=()):
        super().__init__(items)
        self.etype = etype

    def __deepcopy__(self, memo):
        return ArrV(self.etype, [copy.deepcopy(x, memo) for x in self])


class StructV(dict):
    def __init__(self, name: str, items=()):
        super().__init__(items)
        self.name = name

    def __deepcopy__(self, memo):
        return StructV(self.name, {k: copy.deepcopy(v, memo) for k, v in self.items()})


def zero_value(t: SolType, structs: dict) -> Any:
    match t:
        case ElemType(name):
            if name == "bool":
                return False
            if name == "address":
                return Addr(0)
            if name.startswith("bytes") or name in ("byte", "string"):
                return bytes(32) if name != "string" else b""
            return SInt(0) if name.startswith("int") else 0
        case MappingType(_, v):
            return MapV(v, structs)
        case ArrayType(e, n):
            return ArrV(e, [zero_value(e, structs) for _ in range(n or 0)])
        case NamedType(name):
            sd = structs.get(name)
            if sd is None:
                raise ExecError(f"unknown struct {name}")
            return StructV(name, {f: zero_value(ft, structs) for f, ft in sd.fields})
    raise ExecError(f"no zero value for {t}")


def coerce(v: Any, t: Optional[SolType]) -> Any:
    if not isinstance(t, ElemType) or isinstance(v, bool):
        return v
    if t.name == "address":
        return Addr(int(v) & ((1 << 160) - 1)) if isinstance(v, int) else v
    if t.is_int and isinstance(v, int):
        bits = int(t.name.lstrip("uint") or 256)
        bits = min(bits, WIDTH)
        if t.signed:
            v &= (1 << bits) - 1
            return SInt(v - (1 << bits) if v >> (bits - 1) else v)
        return int(v) & ((1 << bits) - 1)
    if t.name.startswith("bytes") and isinstance(v, int):
        return (v & ((1 << 256) - 1)).to_bytes(32, "big")
    return v


def canon(v: Any) -> Any:
    """Canonical, hashable form; mapping entries equal to the default vanish."""
    if isinstance(v, MapV):
        zero = canon(zero_value(v.vtype, v.structs))
        items = []
        for k, x in v.data.items():
            cx = canon(x)
            if cx != zero:
                items.append((canon(k), cx))
        return ("map", tuple(sorted(items, key=repr)))
    if isinstance(v, ArrV):
        return ("arr", tuple(canon(x) for x in v))
    if isinstance(v, StructV):
        return ("struct", v.name, tuple(sorted((k, canon(x)) for k, x in v.items())))
    if isinstance(v, bool):
        return ("bool", v)
    if isinstance(v, Addr):
        return ("addr", int(v))
    if isinstance(v, int):
        return ("int", int(v))
    if isinstance(v, bytes):
        return ("bytes", v.hex())
    return ("?", repr(v))


def to_json_value(v: Any) -> Any:
    if isinstance(v, MapV):
        return {str(to_json_value(k)): to_json_value(x) for k, x in v.data.items()}
    if isinstance(v, (ArrV, list, tuple)):
        return [to_json_value(x) for x in v]
    if isinstance(v, StructV):
        return {k: to_json_value(x) for k, x in v.items()}
    if isinstance(v, Addr):
        return hex(v)
    if isinstance(v, bytes):
        return "0x" + v.hex()
    if isinstance(v, bool) or v is None:
        return v
    if isinstance(v, int):
        return int(v)
    return repr(v)


def _encode(v: Any) -> bytes:
    if isinstance(v, bool):
        return bytes([1 if v else 0]).rjust(32, b"\0")
    if isinstance(v, int):
        return (int(v) & ((1 << 256) - 1)).to_bytes(32, "big")
    if isinstance(v, bytes):
        return v.ljust(32, b"\0")
    return repr(v).encode()


def hash_builtin(args: Sequence[Any]) -> bytes:
    # SHA3-256 stands in for Keccak-256; only equality of digests matters here
    return hashlib.sha3_256(b"".join(_encode(a) for a in args)).digest()


# ------------------------------------------------------------- machine state

class ExecError(Exception):
    pass


@dataclass
class LedgerState:
    balances: dict = field(default_factory=dict)
    storage: dict = field(default_factory=dict)
    now: int = 0
    block_number: int = 0
    event_log: list = field(default_factory=list)

    def balance(self, a: Addr) -> int:
        return self.balances.get(Addr(a), 0)

    def copy(self) -> "LedgerState":
        return copy.deepcopy(self)

    def key(self) -> tuple:
        bal = tuple(sorted((int(a), b) for a, b in self.balances.items() if b))
        sto = tuple(sorted((k, canon(v)) for k, v in self.storage.items()))
        ev = tuple((n, tuple(canon(x) for x in vals)) for n, vals in self.event_log)
        return (bal, sto, ev)

    def digest(self) -> str:
        return hashlib.sha256(repr(self.key()).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {"balances": {hex(a): b for a, b in sorted(self.balances.items())},
                "storage": {k: to_json_value(v) for k, v in sorted(self.storage.items())},
                "now": self.now, "block_number": self.block_number,
                "events": [[n, [to_json_value(x) for x in vals]] for n, vals in self.event_log]}


@dataclass
class ExecutionState:
    ledger: LedgerState
    frame: dict = field(default_factory=dict)
    types: dict = field(default_factory=dict)   # local name -> declared type


@dataclass(frozen=True)
class Status:
    kind: str                  # N | E | R
    value: Any = None
    reason: str = ""

    def __repr__(self):
        return {"N": "N", "E": f"E({self.reason})"}.get(self.kind, f"R[{self.value!r}]")


N = Status("N")


def E(reason: str = "") -> Status:
    return Status("E", reason=reason)


def R(value: Any = None) -> Status:
    return Status("R", value)


@dataclass
class ExternalEnvironment:
    sender: int = 1
    value: int = 0
    now: Optional[int] = None
    block_number: Optional[int] = None
    call_results: tuple = ()       # success of each transfer/send/call, in order
    _cursor: int = field(default=0, repr=False, compare=False)

    def next_call_ok(self) -> bool:
        i = self._cursor
        self._cursor += 1
        return self.call_results[i] if i < len(self.call_results) else True

    def fresh(self) -> "ExternalEnvironment":
        return ExternalEnvironment(self.sender, self.value, self.now, self.block_number, tuple(self.call_results))

    def to_json(self) -> dict:
        return {"sender": self.sender, "value": self.value, "now": self.now,
                "block_number": self.block_number, "call_results": list(self.call_results)}

    @classmethod
    def from_json(cls, d: dict) -> "ExternalEnvironment":
        s = d.get("sender", 1)
        return cls(int(s, 0) if isinstance(s, str) else s, d.get("value", 0), d.get("now"),
                   d.get("block_number"), tuple(d.get("call_results", ())))


# ---------------------------------------------------------------- interpreter

RULES = ("TRANSITION", "TRANSITION-RET", "TRANSITION-WRO", "TRANSITION-GRD", "TRANSITION-EXC1",
         "TRANSITION-EXC2", "TRANSITION-FAL", "TRANSITION-EXC3", "ARITY")
NO_CHANGE = {"TRANSITION-WRO", "TRANSITION-GRD", "TRANSITION-EXC1", "TRANSITION-EXC2",
             "TRANSITION-EXC3", "ARITY"}


@dataclass
class FireResult:
    ledger: LedgerState
    state: str
    value: Any
    verdict: str
    reason: str = ""


class Interpreter:
    def __init__(self, model: ContractModel):
        self.model = model
        self.structs = model.structs()
        self.vtypes = model.var_types()

    # -------------------------------------------------------- expressions
    def eval_expr(self, st: ExecutionState, e: Expr, env: ExternalEnvironment):
        """Public form: returns (state, status, value)."""
        try:
            return st, N, self.ev(st, e, env)
        except ExecError as x:
            return st, E(str(x)), None

    def ev(self, st: ExecutionState, e: Expr, env: ExternalEnvironment) -> Any:
        match e:
            case Literal(value=v):
                return v
            case Env(name):
                return self.env_value(st, name, env)
            case VarRef(name):
                if name in st.frame:
                    return st.frame[name]
                if name in st.ledger.storage:
                    return st.ledger.storage[name]
                raise ExecError(f"unbound identifier {name}")
            case Member(base, f):
                b = self.ev(st, base, env)
                if f == "length" and isinstance(b, (list, bytes)):
                    return len(b)
                if isinstance(b, StructV) and f in b:
                    return b[f]
                raise ExecError(f"no member {f}")
            case Index(base, idx):
                b = self.ev(st, base, env)
                k = self.ev(st, idx, env)
                return self.index_get(b, k)
            case Unary(op, x):
                v = self.ev(st, x, env)
                if op == "!":
                    return not v
                if op == "-":
                    return wrap_signed(-v) if isinstance(v, SInt) else wrap_unsigned(-v)
                return v
            case Binary(op, l, r):
                return self.binary(st, op, l, r, env)
            case Assign(target, op, value):
                return self.assign(st, target, op, value, env)
            case Call():
                return self.call(st, e, env)
        raise ExecError(f"cannot evaluate {type(e).__name__}")

    def env_value(self, st: ExecutionState, name: str, env: ExternalEnvironment) -> Any:
        if name == "msg.sender":
            return Addr(env.sender)
        if name == "msg.value":
            return env.value
        if name == "now":
            return st.ledger.now
        if name == "block.number":
            return st.ledger.block_number
        if name == "this.balance":
            return st.ledger.balance(THIS)
        raise ExecError(name)

    def index_get(self, b, k):
        if isinstance(b, MapV):
            return b.get(k)
        if isinstance(b, (list, bytes)):
            if not isinstance(k, int) or not 0 <= k < len(b):
                raise ExecError("index out of range")
            return b[k]
        raise ExecError("indexing a non-container")

    def binary(self, st, op, l, r, env):
        a = self.ev(st, l, env)
        if op == "&&":
            return bool(a) and bool(self.ev(st, r, env))
        if op == "||":
            return bool(a) or bool(self.ev(st, r, env))
        b = self.ev(st, r, env)
        return arith(op, a, b)

    # --------------------------------------------------------- lvalues
    def lvalue(self, st: ExecutionState, e: Expr, env) -> tuple[Any, Any, Optional[SolType]]:
        """Resolve an assignable location to (container, key, declared type)."""
        match e:
            case VarRef(name):
                if name in st.frame:
                    return st.frame, name, st.types.get(name)
                if name in st.ledger.storage:
                    return st.ledger.storage, name, self.vtypes.get(name)
                raise ExecError(f"unbound identifier {name}")
            case Member(base, f):
                b = self.ev(st, base, env)
                if f == "length" and isinstance(b, ArrV):
                    return b, "#length", ElemType("uint")
                if isinstance(b, StructV) and f in b:
                    sd = self.structs[b.name]
                    return b, f, dict(sd.fields).get(f)
                raise ExecError(f"cannot assign member {f}")
            case Index(base, idx):
                b = self.ev(st, base, env)
                k = self.ev(st, idx, env)
                if isinstance(b, MapV):
                    return b, ("#map", k), b.vtype
                if isinstance(b, ArrV):
                    if not isinstance(k, int) or not 0 <= k < len(b):
                        raise ExecError("index out of range")
                    return b, k, b.etype
                raise ExecError("indexing a non-container")
        raise ExecError("not assignable")

    def store(self, container, key, value):
        if isinstance(container, MapV):
            container.set(key[1], value)
        elif key == "#length":
            n = int(value)
            if n < len(container):
                del container[n:]
            else:
                container.extend(zero_value(container.etype, self.structs) for _ in range(n - len(container)))
        else:
            container[key] = value

    def load(self, container, key):
        if isinstance(container, MapV):
            return container.get(key[1])
        if key == "#length":
            return len(container)
        return container[key]

    def assign(self, st, target, op, value, env):
        cont, key, ty = self.lvalue(st, target, env)
        v = self.ev(st, value, env)
        if op != "=":
            v = arith(op[0], self.load(cont, key), v)
        v = coerce(v, ty)
        self.store(cont, key, v)
        return v

    # ----------------------------------------------------------- calls
    def call(self, st: ExecutionState, c: Call, env: ExternalEnvironment) -> Any:
        target = self.ev(st, c.target, env) if c.target is not None else None
        args = [self.ev(st, a, env) for a in c.args]
        if c.kind == "builtin-hash":
            return hash_builtin(args)
        if c.kind == "push":
            if not isinstance(target, ArrV):
                raise ExecError("push on a non-array")
            target.append(coerce(args[0], target.etype))
            return len(target)
        if c.kind == "internal":
            sd = self.structs.get(c.name)
            if sd is None or len(sd.fields) != len(args):
                raise ExecError(f"unknown function {c.name}")
            return StructV(sd.name, {f: coerce(a, ft) for (f, ft), a in zip(sd.fields, args)})
        # value-moving calls: transfer raises on failure, send/call return false
        amount = args[0] if args else 0
        ok = env.next_call_ok() and st.ledger.balance(THIS) >= amount >= 0
        if ok:
            bal = st.ledger.balances
            bal[THIS] = st.ledger.balance(THIS) - amount
            bal[Addr(target)] = st.ledger.balance(target) + amount
        if c.kind == "transfer":
            if not ok:
                raise ExecError("transfer failed")
            return None
        return ok

    # ------------------------------------------------------- statements
    def exec(self, st: ExecutionState, status: Status, s: Optional[Stmt], env) -> tuple[ExecutionState, Status]:
        if s is None or status.kind != "N":          # SKIP-EXC / SKIP-RET
            return st, status
        try:
            return st, self._exec(st, s, env)
        except ExecError as x:
            return st, E(str(x))

    def _exec(self, st: ExecutionState, s: Stmt, env) -> Status:
        match s:
            case VarDecl(t, name, init, loc):        # VARIABLE / VARIABLE-ASG
                if name in self.vtypes:
                    raise ExecError(f"local {name} shadows a contract variable")
                v = zero_value(t, self.structs) if init is None else self.ev(st, init, env)
                if loc == "memory":
                    v = copy.deepcopy(v)
                st.frame[name] = coerce(v, t)
                st.types[name] = t
                return N
            case ExprStmt(e):                        # EXPRESSION
                self.ev(st, e, env)
                return N
            case Emit(ev, args):                     # EVENT / EVENT-EXC
                vals = tuple(copy.deepcopy(self.ev(st, a, env)) for a in args)
                st.ledger.event_log.append((ev, vals))
                return N
            case Return(None):                       # RETURN
                return R(None)
            case Return(v):                          # RETURN-VAL / RETURN-EXC
                return R(self.ev(st, v, env))
            case If(c, t, o):                        # IF1/2, IFELSE1/2, IF(-ELSE)-EXC
                if self.ev(st, c, env):
                    return self._exec(st, t, env)
                return self._exec(st, o, env) if o is not None else N
            case While(c, body):                     # WHILE1/2, WHILE-EXC
                for _ in range(MAX_LOOP_STEPS):
                    if not self.ev(st, c, env):
                        return N
                    res = self._exec(st, body, env)
                    if res.kind != "N":
                        return res
                raise ExecError("loop step bound exceeded")
            case For(i, c, a, body):                 # FOR: reduce to a while loop
                return self._exec(st, for_as_while(s), env)
            case Compound(stmts):                    # COMPOUND
                for x in stmts:
                    res = self._exec(st, x, env)
                    if res.kind != "N":
                        return res
                return N
        raise ExecError(f"unsupported statement {type(s).__name__}")

    # ------------------------------------------------------ transitions
    def fresh_ledger(self, env: ExternalEnvironment, balances: Optional[dict] = None) -> LedgerState:
        """Ledger of a contract about to run its constructor."""
        led = LedgerState(balances={Addr(k): v for k, v in (balances or {}).items()})
        if env.now is not None:
            led.now = env.now
        if env.block_number is not None:
            led.block_number = env.block_number
        for name, t in self.vtypes.items():
            led.storage[name] = zero_value(t, self.structs)
        led.storage["creationTime"] = led.now
        return led

    def deploy(self, env: ExternalEnvironment, balances: Optional[dict] = None) -> tuple[LedgerState, str]:
        led = self.fresh_ledger(env, balances)
        st = ExecutionState(led)
        if not self.move_value(led, env):
            raise DeployError("deployment value exceeds sender balance")
        st, status = self.exec(st, N, self.model.initial_action, env)
        if status.kind == "E":
            raise DeployError(f"constructor raised: {status.reason}")
        return led, self.model.initial_state

    def move_value(self, led: LedgerState, env: ExternalEnvironment) -> bool:
        if env.value:
            if led.balance(env.sender) < env.value:
                return False
            led.balances[Addr(env.sender)] = led.balance(env.sender) - env.value
            led.balances[THIS] = led.balance(THIS) + env.value
        return True

    def fire(self, ledger: LedgerState, state: str, name: str, args: Sequence[Any],
             env: ExternalEnvironment) -> FireResult:
        if env.now is not None:
            ledger.now = env.now
        if env.block_number is not None:
            ledger.block_number = env.block_number
        pre = ledger.copy()
        t = self.model.transition(name) if name not in (CONSTRUCTOR, FALLBACK) else None
        if t is None:                                 # TRANSITION-FAL / -EXC3
            led = ledger.copy()
            if self.model.fallback_action is None or not self.move_value(led, env):
                return FireResult(pre, state, None, "TRANSITION-EXC3", "no fallback")
            st, status = self.exec(ExecutionState(led), N, self.model.fallback_action, env)
            if status.kind == "E":
                return FireResult(pre, state, None, "TRANSITION-EXC3", status.reason)
            return FireResult(led, state, None, "TRANSITION-FAL")
        if t.src != state:
            return FireResult(pre, state, None, "TRANSITION-WRO")
        if len(args) != len(t.params):
            return FireResult(pre, state, None, "ARITY", f"expected {len(t.params)} arguments")
        led = ledger.copy()
        if (env.value and not t.payable) or not self.move_value(led, env):
            return FireResult(pre, state, None, "TRANSITION-EXC2", "value rejected")
        st = ExecutionState(led)
        for (pname, ptype), a in zip(t.params, args):
            st.frame[pname] = coerce(a, ptype)
            st.types[pname] = ptype
        if t.guard is not None:
            _, gs, g = self.eval_expr(st, t.guard, env)
            if gs.kind == "E":
                return FireResult(pre, state, None, "TRANSITION-EXC1", gs.reason)
            if not g:
                return FireResult(pre, state, None, "TRANSITION-GRD")
        st, status = self.exec(st, N, t.action, env)
        if status.kind == "E":
            return FireResult(pre, state, None, "TRANSITION-EXC2", status.reason)
        if status.kind == "R":
            return FireResult(led, t.dst, status.value, "TRANSITION-RET")
        return FireResult(led, t.dst, None, "TRANSITION")


class DeployError(Exception):
    pass


def arith(op: str, a: Any, b: Any) -> Any:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op in ("<", ">", "<=", ">="):
        if not (isinstance(a, int) and isinstance(b, int)):
            raise ExecError(f"cannot compare {type(a).__name__} and {type(b).__name__}")
        return {"<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]
    if isinstance(a, bool) or isinstance(b, bool) or not (isinstance(a, int) and isinstance(b, int)):
        raise ExecError(f"arithmetic on non-integers ({op})")
    signed = isinstance(a, SInt) or isinstance(b, SInt)
    if op in ("/", "%"):
        if b == 0:
            raise ExecError("division by zero")
        if signed:
            q = abs(int(a)) // abs(int(b))
            q = q if (a >= 0) == (b >= 0) else -q
            res = q if op == "/" else int(a) - q * int(b)
        else:
            res = (int(a) // int(b)) if op == "/" else int(a) % int(b)
    else:
        res = {"+": int(a) + int(b), "-": int(a) - int(b), "*": int(a) * int(b)}[op]
    return wrap_signed(res) if signed else wrap_unsigned(res)


def for_as_while(s: For) -> Compound:
    """for (i; c; a) b  ==  { i; while (c) { b; a; } }"""
    return Compound((s.init, While(s.cond, Compound((s.body, ExprStmt(s.after))))))


def exec_statement(model: ContractModel, state: ExecutionState, status: Status, stmt: Stmt,
                   env: ExternalEnvironment) -> tuple[ExecutionState, Status]:
    return Interpreter(model).exec(state, status, stmt, env)


def eval_expr(model: ContractModel, state: ExecutionState, expr: Expr, env: ExternalEnvironment):
    return Interpreter(model).eval_expr(state, expr, env)


def fire_transition(model: ContractModel, config: tuple[LedgerState, str], name: str,
                    args: Sequence[Any], env: ExternalEnvironment):
    r = Interpreter(model).fire(config[0], config[1], name, args, env)
    return r.ledger, r.state, r.value, r.verdict


# -------------------------------------------------------------------- traces

@dataclass
class CallSpec:
    name: str
    args: tuple = ()
    env: ExternalEnvironment = field(default_factory=ExternalEnvironment)

    def to_json(self) -> dict:
        return {"name": self.name, "args": [to_json_value(a) for a in self.args], "env": self.env.to_json()}


@dataclass
class TraceStep:
    call: str
    verdict: str
    state: str
    value: Any
    digest: str
    events: list

    def to_json(self) -> dict:
        return {"call": self.call, "verdict": self.verdict, "state": self.state,
                "value": to_json_value(self.value), "ledger": self.digest,
                "events": [[n, [to_json_value(x) for x in v]] for n, v in self.events]}


@dataclass
class Trace:
    initial_state: str
    steps: list
    final_state: str
    ledger: LedgerState

    def to_json(self) -> dict:
        return {"initial_state": self.initial_state, "steps": [s.to_json() for s in self.steps],
                "final_state": self.final_state, "ledger": self.ledger.to_json()}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


DEFAULT_ENDOWMENT = 10**6


def initial_balances(calls: Sequence[CallSpec], ctor_env: ExternalEnvironment) -> dict:
    addrs = {ctor_env.sender} | {c.env.sender for c in calls}
    return {a: DEFAULT_ENDOWMENT for a in addrs}


def run_trace(model: ContractModel, ctor_env: Optional[ExternalEnvironment], calls: Sequence[CallSpec],
              balances: Optional[dict] = None) -> Trace:
    ctor_env = ctor_env or ExternalEnvironment()
    it = Interpreter(model)
    led, s = it.deploy(ctor_env.fresh(), balances if balances is not None else initial_balances(calls, ctor_env))
    start = s
    steps = []
    for c in calls:
        n_before = len(led.event_log)
        r = it.fire(led, s, c.name, c.args, c.env.fresh())
        led, s = r.ledger, r.state
        steps.append(TraceStep(c.name, r.verdict, s, r.value, led.digest(), list(led.event_log[n_before:])))
    return Trace(start, steps, s, led)
