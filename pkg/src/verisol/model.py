"""Contract model, statement/expression ASTs and statement addressing.

Every node is a frozen dataclass.  Source spans are carried for diagnostics
but excluded from equality, so two parses of the same text compare equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

Span = Optional[tuple[int, int]]


def _span() -> Span:
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    span: Span = None
    severity: str = "error"

    def to_json(self) -> dict:
        a, b = self.span if self.span else (0, 0)
        return {"code": self.code, "span": [a, b], "msg": self.message,
                "severity": self.severity}

    def __str__(self):
        where = f"@{self.span[0]}-{self.span[1]}" if self.span else ""
        return f"{self.severity}[{self.code}]{where}: {self.message}"


# ---------------------------------------------------------------------- types

@dataclass(frozen=True)
class ElemType:
    name: str  # uint, uint64, int, bool, address, bytes32, string ...

    @property
    def signed(self) -> bool:
        return self.name.startswith("int")

    @property
    def is_int(self) -> bool:
        return self.name.startswith(("uint", "int"))


@dataclass(frozen=True)
class MappingType:
    key: "SolType"
    value: "SolType"


@dataclass(frozen=True)
class ArrayType:
    elem: "SolType"
    size: Optional[int] = None


@dataclass(frozen=True)
class NamedType:
    name: str  # struct name


SolType = Union[ElemType, MappingType, ArrayType, NamedType]

ELEMENTARY = {"bool", "address", "string", "byte", "uint", "int"} | {
    f"{p}{n}" for p in ("uint", "int") for n in range(8, 257, 8)
} | {f"bytes{n}" for n in range(1, 33)}


def format_type(t: SolType) -> str:
    match t:
        case ElemType(name):
            return name
        case MappingType(k, v):
            return f"mapping({format_type(k)} => {format_type(v)})"
        case ArrayType(e, None):
            return f"{format_type(e)}[]"
        case ArrayType(e, n):
            return f"{format_type(e)}[{n}]"
        case NamedType(name):
            return name
    raise TypeError(t)


# ---------------------------------------------------------------- expressions

ENV_NAMES = ("msg.sender", "msg.value", "now", "this.balance", "block.number")
BINARY_OPS = ("==", "!=", "<", ">", ">=", "<=", "+", "*", "-", "/", "%", "&&", "||")
CALL_KINDS = ("builtin-hash", "transfer", "send", "low-level-call", "push", "internal")


@dataclass(frozen=True)
class Literal:
    value: object          # int | bool | bytes
    kind: str = "int"      # int | bool | bytes | address
    text: Optional[str] = field(default=None, compare=False)
    span: Span = _span()


@dataclass(frozen=True)
class VarRef:
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class Member:
    base: "Expr"
    field: str
    span: Span = _span()


@dataclass(frozen=True)
class Index:
    base: "Expr"
    index: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    lhs: "Expr"
    rhs: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Assign:
    target: "Expr"
    op: str                # "=", "+=", "-=", "*=", "/=", "%="
    value: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Call:
    kind: str              # one of CALL_KINDS
    name: str              # keccak256, transfer, send, call, push, or struct name
    target: Optional["Expr"]
    args: tuple["Expr", ...] = ()
    span: Span = _span()


@dataclass(frozen=True)
class Env:
    name: str              # one of ENV_NAMES
    span: Span = _span()


Expr = Union[Literal, VarRef, Member, Index, Unary, Binary, Assign, Call, Env]

TRUE = Literal(True, "bool")


# ----------------------------------------------------------------- statements

@dataclass(frozen=True)
class VarDecl:
    type: SolType
    name: str
    init: Optional[Expr] = None
    location: Optional[str] = None   # storage | memory
    span: Span = _span()


@dataclass(frozen=True)
class ExprStmt:
    expr: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Emit:
    event: str
    args: tuple[Expr, ...] = ()
    span: Span = _span()


@dataclass(frozen=True)
class Return:
    value: Optional[Expr] = None
    span: Span = _span()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Stmt"
    orelse: Optional["Stmt"] = None
    span: Span = _span()


@dataclass(frozen=True)
class For:
    init: VarDecl
    cond: Expr
    after: Expr
    body: "Stmt"
    span: Span = _span()


@dataclass(frozen=True)
class While:
    cond: Expr
    body: "Stmt"
    span: Span = _span()


@dataclass(frozen=True)
class Compound:
    stmts: tuple["Stmt", ...] = ()
    span: Span = _span()


Stmt = Union[VarDecl, ExprStmt, Emit, Return, If, For, While, Compound]
SIMPLE_STMTS = (VarDecl, ExprStmt, Emit, Return)


# ---------------------------------------------------------------- definitions

@dataclass(frozen=True)
class StructDef:
    name: str
    fields: tuple[tuple[str, SolType], ...]
    span: Span = _span()


@dataclass(frozen=True)
class EventDef:
    name: str
    params: tuple[tuple[str, SolType], ...]
    span: Span = _span()


Definition = Union[StructDef, EventDef]


@dataclass(frozen=True)
class PropertyDecl:
    text: str
    ctl: bool = False          # direct CTL rather than a template
    span: Span = _span()


@dataclass(frozen=True)
class Transition:
    name: str
    src: str
    dst: str
    params: tuple[tuple[str, SolType], ...] = ()
    guard: Optional[Expr] = None
    returns: Optional[SolType] = None
    action: Optional[Stmt] = None
    payable: bool = False
    origin: Optional[str] = None   # set by conformance for fallback copies
    span: Span = _span()

    @property
    def origin_name(self) -> str:
        return self.origin or self.name


@dataclass(frozen=True)
class ContractModel:
    name: str
    states: tuple[str, ...]
    initial_state: str
    final_states: tuple[str, ...] = ()
    definitions: tuple[Definition, ...] = ()
    variables: tuple[tuple[str, SolType], ...] = ()
    transitions: tuple[Transition, ...] = ()
    initial_action: Optional[Stmt] = None
    fallback_action: Optional[Stmt] = None
    properties: tuple[PropertyDecl, ...] = ()
    aliases: tuple[tuple[str, str], ...] = ()
    span: Span = _span()

    def transition(self, name: str) -> Optional[Transition]:
        for t in self.transitions:
            if t.name == name:
                return t
        return None

    def structs(self) -> dict[str, StructDef]:
        return {d.name: d for d in self.definitions if isinstance(d, StructDef)}

    def events(self) -> dict[str, EventDef]:
        return {d.name: d for d in self.definitions if isinstance(d, EventDef)}

    def var_types(self) -> dict[str, SolType]:
        # creationTime is implicit in every contract (set at deployment)
        out = {"creationTime": ElemType("uint")}
        out.update(dict(self.variables))
        return out


# ------------------------------------------------------------ tree utilities

def sub_exprs(e: Expr) -> Iterator[Expr]:
    """Pre-order walk over an expression tree."""
    yield e
    match e:
        case Member(base=b):
            yield from sub_exprs(b)
        case Index(base=b, index=i):
            yield from sub_exprs(b)
            yield from sub_exprs(i)
        case Unary(operand=o):
            yield from sub_exprs(o)
        case Binary(lhs=l, rhs=r):
            yield from sub_exprs(l)
            yield from sub_exprs(r)
        case Assign(target=t, value=v):
            yield from sub_exprs(t)
            yield from sub_exprs(v)
        case Call(target=t, args=args):
            if t is not None:
                yield from sub_exprs(t)
            for a in args:
                yield from sub_exprs(a)


def is_pure(e: Expr) -> bool:
    # keccak256 has no side effects, so it is allowed in guards and conditions
    return not any(isinstance(x, Assign) or (isinstance(x, Call) and x.kind != "builtin-hash")
                   for x in sub_exprs(e))


def children(s: Stmt) -> list[Stmt]:
    match s:
        case If(then=t, orelse=o):
            return [t] if o is None else [t, o]
        case For(init=i, after=a, body=b):
            return [i, b, ExprStmt(a, span=getattr(a, "span", None))]
        case While(body=b):
            return [b]
        case Compound(stmts=ss):
            return list(ss)
    return []


def stmt_exprs(s: Stmt) -> list[Expr]:
    """Expressions owned directly by a statement (not by its children)."""
    match s:
        case VarDecl(init=i):
            return [] if i is None else [i]
        case ExprStmt(expr=e):
            return [e]
        case Emit(args=a):
            return list(a)
        case Return(value=v):
            return [] if v is None else [v]
        case If(cond=c) | While(cond=c):
            return [c]
        case For(cond=c):
            return [c]
    return []


def walk_stmts(s: Optional[Stmt], path: tuple[int, ...] = ()) -> Iterator[tuple[tuple[int, ...], Stmt]]:
    if s is None:
        return
    yield path, s
    for i, c in enumerate(children(s)):
        yield from walk_stmts(c, path + (i,))


@dataclass(frozen=True, order=True)
class StatementId:
    transition: str
    path: tuple[int, ...]

    def __str__(self):
        return f"{self.transition}#{'.'.join(map(str, self.path)) or 'root'}"


CONSTRUCTOR = "constructor"
FALLBACK = "fallback"


def actions(model: ContractModel) -> list[tuple[str, Optional[Stmt]]]:
    out = []
    if model.initial_action is not None:
        out.append((CONSTRUCTOR, model.initial_action))
    if model.fallback_action is not None:
        out.append((FALLBACK, model.fallback_action))
    out.extend((t.name, t.action) for t in model.transitions)
    return out


def statement_ids(model: ContractModel) -> dict[StatementId, Stmt]:
    out: dict[StatementId, Stmt] = {}
    for name, act in actions(model):
        for path, s in walk_stmts(act):
            out[StatementId(name, path)] = s
    return out


def statement_at(root: Stmt, path: tuple[int, ...]) -> Stmt:
    s = root
    for i in path:
        s = children(s)[i]
    return s


# ------------------------------------------------------------ pretty printing

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, ">": 4, "<=": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}


def _prec(e: Expr) -> int:
    match e:
        case Assign():
            return 0
        case Binary(op=op):
            return _PREC[op]
        case Unary():
            return 7
    return 8


def format_expr(e: Expr) -> str:
    match e:
        case Literal(value=v, kind=k, text=txt):
            if txt is not None:
                return txt
            if k == "bool":
                return "true" if v else "false"
            if k == "bytes":
                return "0x" + bytes(v).hex()
            if k == "address":
                return hex(v)
            return str(v)
        case VarRef(name):
            return name
        case Env(name):
            return name
        case Member(base, f):
            return f"{_wrap(base, 8)}.{f}"
        case Index(base, idx):
            return f"{_wrap(base, 8)}[{format_expr(idx)}]"
        case Unary(op, operand):
            inner = _wrap(operand, 7)
            if op in "+-" and inner[:1] == op:
                inner = f"({inner})"   # keep "- -x" from lexing as "--x"
            return f"{op}{inner}"
        case Binary(op, l, r):
            p = _PREC[op]
            return f"{_wrap(l, p)} {op} {_wrap(r, p + 1)}"
        case Assign(t, op, v):
            return f"{format_expr(t)} {op} {_wrap(v, 0)}"
        case Call(kind, name, target, args):
            a = ", ".join(format_expr(x) for x in args)
            if kind == "low-level-call":
                return f"{_wrap(target, 8)}.call.value({a})()"
            if target is not None:
                return f"{_wrap(target, 8)}.{name}({a})"
            return f"{name}({a})"
    raise TypeError(e)


def _wrap(e: Expr, min_prec: int) -> str:
    s = format_expr(e)
    # a leading unary minus inside another unary must keep its parentheses
    return f"({s})" if _prec(e) < min_prec else s


def format_stmt(s: Stmt, indent: int = 0, step: str = "    ") -> str:
    pad = step * indent
    match s:
        case VarDecl(t, name, init, loc):
            head = format_type(t) + (f" {loc}" if loc else "") + f" {name}"
            return pad + head + (f" = {format_expr(init)};" if init is not None else ";")
        case ExprStmt(e):
            return pad + format_expr(e) + ";"
        case Emit(ev, args):
            return pad + f"emit {ev}({', '.join(format_expr(a) for a in args)});"
        case Return(None):
            return pad + "return;"
        case Return(v):
            return pad + f"return {format_expr(v)};"
        case If(c, t, o):
            out = pad + f"if ({format_expr(c)})" + _block(t, indent, step)
            if o is not None:
                out += (" " if isinstance(t, Compound) else "\n" + pad) + "else"
                if isinstance(o, If):
                    out += " " + format_stmt(o, indent, step).lstrip()
                else:
                    out += _block(o, indent, step)
            return out
        case For(i, c, a, b):
            init = format_stmt(i).rstrip(";")
            return pad + f"for ({init}; {format_expr(c)}; {format_expr(a)})" + _block(b, indent, step)
        case While(c, b):
            return pad + f"while ({format_expr(c)})" + _block(b, indent, step)
        case Compound(ss):
            if not ss:
                return pad + "{ }"
            inner = "\n".join(format_stmt(x, indent + 1, step) for x in ss)
            return pad + "{\n" + inner + "\n" + pad + "}"
    raise TypeError(s)


def _block(s: Stmt, indent: int, step: str) -> str:
    if isinstance(s, Compound):
        return " " + format_stmt(s, indent, step).lstrip()
    return "\n" + format_stmt(s, indent + 1, step)


def format_action(s: Optional[Stmt]) -> str:
    return "" if s is None else format_stmt(s)
