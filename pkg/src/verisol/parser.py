"""Recursive-descent parser for `.vsc` contract files and the Solidity subset.

The statement grammar is the supported subset: declarations, expression
statements, emit, return, if/else, for, while and compound blocks.  Anything
outside it (``var``, tuple destructuring, ``break``, modifiers...) is
rejected with ``unsupported-statement`` rather than being skipped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .lexer import ParseError, Token, TokenStream, normalize_source, tokenize
from .model import (
    ELEMENTARY, ArrayType, Assign, Binary, Call, Compound, ContractModel, Diagnostic, ElemType,
    Emit, Env, EventDef, Expr, ExprStmt, For, If, Index, Literal, MappingType, Member, NamedType,
    PropertyDecl, Return, SolType, Stmt, StructDef, Transition, Unary, VarDecl, VarRef, While,
    is_pure,
)

TIME_UNITS = {"seconds": 1, "minutes": 60, "hours": 3600, "days": 86400, "weeks": 604800}
ETHER_UNITS = {"wei": 1, "szabo": 10**12, "finney": 10**15, "ether": 10**18}
HASH_BUILTINS = ("keccak256", "sha3", "sha256")
ASSIGN_OPS = ("=", "+=", "-=", "*=", "/=", "%=")
_BIN_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, ">": 4, "<=": 4, ">=": 4,
             "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}
UNSUPPORTED = ("var", "break", "continue", "throw", "do", "revert", "require", "assert",
               "assembly", "delete", "try", "selfdestruct", "suicide")


@dataclass
class SourceFile:
    path: str
    text: str

    def __post_init__(self):
        self.text = normalize_source(self.text)

    @classmethod
    def read(cls, path: Union[str, Path]) -> "SourceFile":
        return cls(str(path), Path(path).read_text(encoding="utf-8"))

    def line_col(self, offset: int) -> tuple[int, int]:
        before = self.text[:offset]
        return before.count("\n") + 1, offset - (before.rfind("\n") + 1) + 1


def _unsupported(tok: Token, what: str) -> ParseError:
    return ParseError([Diagnostic("unsupported-statement", what, (tok.start, tok.end))])


class Parser(TokenStream):

    # ------------------------------------------------------------ types
    def at_type_start(self) -> bool:
        t, n = self.tok, self.peek()
        if t.kind != "ident":
            return False
        if t.text == "mapping":
            return True
        if t.text in ELEMENTARY:
            return not (n.kind == "op" and n.text in ("(", "."))
        if n.kind == "ident":                       # Struct name / Struct storage name
            return True
        if n.text == "[":
            n2 = self.peek(2)
            if n2.text == "]":
                return True
            return n2.kind == "number" and self.peek(3).text == "]" and self.peek(4).kind == "ident"
        return False

    def parse_type(self) -> SolType:
        t = self.ident()
        if t.text == "mapping":
            self.expect("(")
            k = self.parse_type()
            self.expect("=>")
            v = self.parse_type()
            self.expect(")")
            ty: SolType = MappingType(k, v)
        elif t.text in ELEMENTARY:
            ty = ElemType(t.text)
            if t.text == "address":
                self.accept("payable")
        else:
            ty = NamedType(t.text)
        while self.at("["):
            self.advance()
            size = None
            if self.tok.kind == "number":
                size = int(self.advance().text, 0)
            self.expect("]")
            ty = ArrayType(ty, size)
        return ty

    # ------------------------------------------------------ expressions
    def parse_expr(self) -> Expr:
        start = self.tok
        lhs = self.parse_binary(1)
        if self.tok.kind == "op" and self.tok.text in ASSIGN_OPS:
            op = self.advance().text
            if not isinstance(lhs, (VarRef, Member, Index)):
                raise self.error("assignment target must be a variable", tok=start)
            rhs = self.parse_expr()
            return Assign(lhs, op, rhs, span=(start.start, rhs.span[1] if rhs.span else start.end))
        return lhs

    def parse_binary(self, min_prec: int) -> Expr:
        lhs = self.parse_unary()
        while self.tok.kind == "op" and _BIN_PREC.get(self.tok.text, 0) >= min_prec:
            op = self.advance().text
            rhs = self.parse_binary(_BIN_PREC[op] + 1)
            lhs = Binary(op, lhs, rhs, span=_join(lhs.span, rhs.span))
        return lhs

    def parse_unary(self) -> Expr:
        t = self.tok
        if t.kind == "op" and t.text in ("!", "-", "+"):
            self.advance()
            e = self.parse_unary()
            return Unary(t.text, e, span=_join((t.start, t.end), e.span))
        if t.kind == "op" and t.text in ("++", "--"):
            self.advance()
            e = self.parse_unary()
            return _incr(e, t.text, (t.start, e.span[1] if e.span else t.end))
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while True:
            t = self.tok
            if self.accept("."):
                f = self.ident()
                e = _member(e, f.text, (e.span[0] if e.span else t.start, f.end))
            elif self.accept("["):
                idx = self.parse_expr()
                end = self.expect("]")
                e = Index(e, idx, span=(e.span[0] if e.span else t.start, end.end))
            elif self.at("{") and isinstance(e, Member) and e.field == "call":
                # addr.call{value: v}("")
                self.advance()
                key = self.ident()
                if key.text != "value":
                    raise _unsupported(key, "only {value: ...} call options are supported")
                self.expect(":")
                v = self.parse_expr()
                self.expect("}")
                self.expect("(")
                if self.tok.kind == "string":
                    self.advance()
                end = self.expect(")")
                e = Call("low-level-call", "call", e.base, (v,), span=(e.span[0], end.end))
            elif self.accept("("):
                args = self.parse_args(")")
                end = self.expect(")")
                e = self.make_call(e, args, t, (e.span[0] if e.span else t.start, end.end))
            elif t.kind == "op" and t.text in ("++", "--"):
                self.advance()
                e = _incr(e, t.text, (e.span[0] if e.span else t.start, t.end))
            else:
                return e

    def parse_args(self, close: str) -> list[Expr]:
        args: list[Expr] = []
        if not self.at(close):
            args.append(self.parse_expr())
            while self.accept(","):
                args.append(self.parse_expr())
        return args

    def make_call(self, callee: Expr, args: list[Expr], tok: Token, span) -> Expr:
        match callee:
            case Call(kind="low-level-call") if not args:
                return callee              # the trailing () of addr.call.value(v)()
            case VarRef(name) if name in HASH_BUILTINS:
                return Call("builtin-hash", name, None, tuple(args), span=span)
            case VarRef(name):
                return Call("internal", name, None, tuple(args), span=span)
            case Member(base, "transfer"):
                return Call("transfer", "transfer", base, tuple(args), span=span)
            case Member(base, "send"):
                return Call("send", "send", base, tuple(args), span=span)
            case Member(base, "push"):
                return Call("push", "push", base, tuple(args), span=span)
            case Member(Member(base, "call"), "value"):
                if len(args) != 1:
                    raise self.error("call.value takes one argument", tok=tok)
                if not self.at("("):
                    raise self.error("expected '()' after call.value(...)")
                return Call("low-level-call", "call", base, tuple(args), span=span)
        raise _unsupported(tok, f"unsupported call of {callee!r}"[:120])

    def parse_primary(self) -> Expr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            value = int(t.text, 0)
            end, text = t.end, None
            if self.tok.kind == "ident" and self.tok.text in TIME_UNITS | ETHER_UNITS:
                u = self.advance()
                value *= (TIME_UNITS | ETHER_UNITS)[u.text]
                end, text = u.end, f"{t.text} {u.text}"
            return Literal(value, "int", text, span=(t.start, end))
        if t.kind == "string":
            self.advance()
            return Literal(json.loads(t.text).encode(), "bytes", t.text, span=(t.start, t.end))
        if t.kind == "ident":
            self.advance()
            if t.text in ("true", "false"):
                return Literal(t.text == "true", "bool", span=(t.start, t.end))
            if t.text == "now":
                return Env("now", span=(t.start, t.end))
            if t.text in UNSUPPORTED:
                raise _unsupported(t, f"'{t.text}' is outside the supported subset")
            return VarRef(t.text, span=(t.start, t.end))
        if self.accept("("):
            e = self.parse_expr()
            if self.at(","):
                raise _unsupported(self.tok, "tuple expressions are not supported")
            self.expect(")")
            return e
        raise self.error("expected expression")

    # ------------------------------------------------------- statements
    def parse_statement(self) -> Stmt:
        t = self.tok
        if t.kind == "ident" and t.text in UNSUPPORTED:
            raise _unsupported(t, f"'{t.text}' statements are outside the supported subset"
                               + ("; declare variables with explicit types" if t.text == "var" else ""))
        if self.at("{"):
            return self.parse_block()
        if self.accept("if"):
            self.expect("(")
            c = self.parse_expr()
            self.expect(")")
            th = self.parse_statement()
            el = self.parse_statement() if self.accept("else") else None
            return If(c, th, el, span=(t.start, self._last_end()))
        if self.accept("while"):
            self.expect("(")
            c = self.parse_expr()
            self.expect(")")
            body = self.parse_statement()
            return While(c, body, span=(t.start, self._last_end()))
        if self.accept("for"):
            self.expect("(")
            if not self.at_type_start():
                raise _unsupported(self.tok, "for-loop initializer must be a declaration")
            init = self.parse_decl()
            self.expect(";")
            c = self.parse_expr()
            self.expect(";")
            a = self.parse_expr()
            self.expect(")")
            body = self.parse_statement()
            return For(init, c, a, body, span=(t.start, self._last_end()))
        if self.accept("return"):
            v = None
            if not self.at(";"):
                v = self.parse_expr()
                if not is_pure(v):
                    raise ParseError([Diagnostic("impure-return", "return value must be side-effect free",
                                                 v.span)])
            end = self.expect(";")
            return Return(v, span=(t.start, end.end))
        if self.accept("emit"):
            name = self.ident()
            self.expect("(")
            args = self.parse_args(")")
            self.expect(")")
            end = self.expect(";")
            return Emit(name.text, tuple(args), span=(t.start, end.end))
        if self.at_type_start():
            d = self.parse_decl()
            end = self.expect(";")
            return VarDecl(d.type, d.name, d.init, d.location, span=(t.start, end.end))
        e = self.parse_expr()
        end = self.expect(";")
        return ExprStmt(e, span=(t.start, end.end))

    def parse_decl(self) -> VarDecl:
        t = self.tok
        ty = self.parse_type()
        loc = None
        if self.at("storage", "memory", "calldata"):
            loc = self.advance().text
        name = self.ident()
        init = self.parse_expr() if self.accept("=") else None
        return VarDecl(ty, name.text, init, loc, span=(t.start, self._last_end()))

    def parse_block(self) -> Compound:
        t = self.expect("{")
        out = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            out.append(self.parse_statement())
        end = self.expect("}")
        return Compound(tuple(out), span=(t.start, end.end))

    def _last_end(self) -> int:
        return self.toks[self.i - 1].end if self.i else 0

    # --------------------------------------------------------- contract
    def parse_contract(self) -> ContractModel:
        start = self.tok
        if not self.accept("contract"):
            raise self.error("expected 'contract'")
        name = self.ident().text
        self.expect("{")
        states: list[str] = []
        initial: Optional[str] = None
        finals: list[str] = []
        defs, variables, transitions, props, aliases = [], [], [], [], []
        ctor = fb = None
        seen_ctor = seen_fb = False
        while not self.at("}"):
            t = self.tok
            if t.kind == "eof":
                raise self.error("unterminated contract")
            if self.accept("states"):
                states.extend(self._ident_list())
                self.expect(";")
            elif self.accept("initial"):
                declare = self.accept("state")
                initial = self.ident().text
                if declare and initial not in states:
                    states.append(initial)
                self.expect(";")
            elif self.accept("final"):
                finals.extend(self._ident_list())
                self.expect(";")
            elif self.accept("struct"):
                sname = self.ident().text
                self.expect("{")
                fields = []
                while not self.accept("}"):
                    ft = self.parse_type()
                    fields.append((self.ident().text, ft))
                    self.expect(";")
                defs.append(StructDef(sname, tuple(fields), span=(t.start, self._last_end())))
            elif self.accept("event"):
                ename = self.ident().text
                self.expect("(")
                params = self._params()
                self.expect(")")
                self.expect(";")
                defs.append(EventDef(ename, tuple(params), span=(t.start, self._last_end())))
            elif self.accept("vars"):
                self.expect("{")
                while not self.accept("}"):
                    vt = self.parse_type()
                    if self.at("public", "private", "internal"):
                        self.advance()
                    variables.append((self.ident().text, vt, (t.start, self._last_end())))
                    self.expect(";")
            elif self.accept("constructor"):
                if seen_ctor:
                    raise self.error("duplicate constructor", "duplicate-constructor", t)
                seen_ctor = True
                if self.accept("("):
                    self.expect(")")
                ctor = _nonempty(self.parse_block())
            elif self.accept("fallback"):
                if seen_fb:
                    raise self.error("duplicate fallback", "duplicate-fallback", t)
                seen_fb = True
                if self.accept("("):
                    self.expect(")")
                fb = _nonempty(self.parse_block())
            elif self.accept("transition"):
                transitions.append(self._transition(t))
            elif self.accept("properties"):
                self.expect("{")
                while not self.accept("}"):
                    pt = self.tok
                    is_ctl = self.accept("ctl")
                    s = self.tok
                    if s.kind != "string":
                        raise self.error("expected property string")
                    self.advance()
                    self.expect(";")
                    props.append(PropertyDecl(json.loads(s.text), is_ctl, span=(pt.start, s.end)))
            elif self.accept("aliases"):
                self.expect("{")
                while not self.accept("}"):
                    k = self.advance()
                    key = json.loads(k.text) if k.kind == "string" else k.text
                    self.expect("=")
                    v = self.tok
                    if v.kind != "string":
                        raise self.error("expected alias target string")
                    self.advance()
                    self.expect(";")
                    aliases.append((key, json.loads(v.text)))
            else:
                raise self.error("expected a contract section")
        end = self.expect("}")
        if self.tok.kind != "eof":
            raise self.error("trailing input after contract")
        if initial is None:
            raise ParseError([Diagnostic("missing-initial", "contract declares no initial state",
                                         (start.start, end.end))])
        diags = []
        seen = set()
        for vname, vt, vspan in variables:
            if vname in seen:
                diags.append(Diagnostic("duplicate-variable", f"variable {vname} declared twice", vspan))
            seen.add(vname)
        if diags:
            raise ParseError(diags)
        return ContractModel(
            name=name, states=tuple(states), initial_state=initial, final_states=tuple(finals),
            definitions=tuple(defs), variables=tuple((n, ty) for n, ty, _ in variables),
            transitions=tuple(transitions), initial_action=ctor, fallback_action=fb,
            properties=tuple(props), aliases=tuple(aliases), span=(start.start, end.end))

    def _ident_list(self) -> list[str]:
        out = [self.ident().text]
        while self.accept(","):
            out.append(self.ident().text)
        return out

    def _params(self) -> list[tuple[str, SolType]]:
        out = []
        if not self.at(")"):
            while True:
                ty = self.parse_type()
                if self.at("memory", "calldata", "storage", "indexed"):
                    self.advance()
                out.append((self.ident().text, ty))
                if not self.accept(","):
                    break
        return out

    def _transition(self, start: Token) -> Transition:
        name = self.ident().text
        params = []
        if self.accept("("):
            params = self._params()
            self.expect(")")
        self.expect("from")
        src = self.ident().text
        self.expect("to")
        dst = self.ident().text
        payable, returns, guard = False, None, None
        while not self.at("{"):
            if self.accept("payable"):
                payable = True
            elif self.accept("returns"):
                paren = self.accept("(")
                returns = self.parse_type()
                if paren:
                    self.expect(")")
            elif self.accept("guard"):
                g0 = self.tok
                guard = self.parse_expr()
                if not is_pure(guard):
                    raise ParseError([Diagnostic("impure-guard",
                                                 f"guard of {name} has side effects", (g0.start, self._last_end()))])
            else:
                raise self.error("expected payable, returns, guard or '{'")
        body = self.parse_block()
        return Transition(name, src, dst, tuple(params), guard, returns, _nonempty(body), payable,
                          span=(start.start, body.span[1]))


# ------------------------------------------------------------------ helpers

def _join(a, b):
    if a and b:
        return (a[0], b[1])
    return a or b


def _incr(e: Expr, op: str, span) -> Expr:
    if not isinstance(e, (VarRef, Member, Index)):
        raise ParseError([Diagnostic("syntax-error", "increment target must be a variable", span)])
    return Assign(e, "+=" if op == "++" else "-=", Literal(1, "int", span=None), span=span)


def _member(base: Expr, name: str, span) -> Expr:
    if isinstance(base, VarRef):
        full = f"{base.name}.{name}"
        if full in ("msg.sender", "msg.value", "this.balance", "block.number"):
            return Env(full, span=span)
        if full == "block.timestamp":
            return Env("now", span=span)
    return Member(base, name, span=span)


def _nonempty(block: Compound) -> Optional[Compound]:
    return block if block.stmts else None


# --------------------------------------------------------------- public API

def _run(text: str, fn, base: int = 0):
    p = Parser(tokenize(text, base))
    out = fn(p)
    if p.tok.kind != "eof":
        raise p.error("unexpected trailing input")
    return out


def parse_expression(text: str) -> Expr:
    return _run(text, Parser.parse_expr)


def parse_statement(text: str) -> Stmt:
    """Parse a single statement; several statements become a Compound."""
    def go(p: Parser):
        stmts = []
        while p.tok.kind != "eof":
            stmts.append(p.parse_statement())
        if len(stmts) == 1:
            return stmts[0]
        if not stmts:
            raise p.error("expected statement")
        return Compound(tuple(stmts), span=(stmts[0].span[0], stmts[-1].span[1]))
    return _run(text, go)


def parse_contract(src: Union[SourceFile, str]) -> Union[ContractModel, list[Diagnostic]]:
    """Parse and validate; returns the model, or the list of diagnostics."""
    from .validate import validate
    if isinstance(src, str):
        src = SourceFile("<string>", src)
    try:
        model = _run(src.text, Parser.parse_contract)
    except ParseError as e:
        return e.diagnostics
    errors = [d for d in validate(model) if d.severity == "error"]
    return errors or model


def load_contract(path: Union[str, Path]) -> ContractModel:
    """Like parse_contract but raises ParseError on failure."""
    res = parse_contract(SourceFile.read(path))
    if isinstance(res, list):
        raise ParseError(res)
    return res


def parse_property(text: str):
    from .properties import parse_template
    return parse_template(text)
